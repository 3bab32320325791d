use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evsyn::econ::{ceac, threshold_grid, CeResult};
use evsyn::markov::{read_psa, run_psa, write_psa, ModelSpec};
use evsyn::mcmc::ChainConfig;
use evsyn::stats::HrInterval;
use evsyn::survival::{cox_fit, read_ipd, read_km_curve, reconstruct_ipd, weibull_fit, write_ipd};
use evsyn::synthesis::{
    brma_fit, bucher_indirect, fixed_effect_ma, nma_fit, random_effects_ma, read_studies,
    BrmaConfig, Contrast, ContrastGraph, Outcome, ReConfig, StudyOutcome,
};
use evsyn::{Error, ErrorKind};
use evsyn_cli::case_study::write_case_study;
use evsyn_cli::config::PipelineConfig;
use evsyn_cli::pipeline::run_pipeline;

const DEFAULT_SEED: u64 = 20_140_101;

#[derive(Parser)]
#[command(
    name = "evsyn",
    version,
    about = "Evidence synthesis and Markov cost-effectiveness models"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "EVSYN_SEED")]
    seed: Option<u64>,
    /// MCMC iterations per chain, burn-in included.
    #[arg(long, global = true)]
    iters: Option<usize>,
    #[arg(long, global = true)]
    burnin: Option<usize>,
    #[arg(long, global = true)]
    chains: Option<usize>,
    /// PSA draws.
    #[arg(long, global = true)]
    draws: Option<usize>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output file, or directory for `run` and `case-study`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

impl Common {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    fn chain(&self) -> ChainConfig {
        self.override_chain(ChainConfig::new(30_000, 15_000, self.seed()).chains(2))
    }

    fn override_chain(&self, mut c: ChainConfig) -> ChainConfig {
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(n) = self.iters {
            c.iterations = n;
        }
        if let Some(n) = self.burnin {
            c.burn_in = n;
        }
        if let Some(n) = self.chains {
            c.n_chains = n;
        }
        c
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum Model {
    Fixed,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct patient-level data from a digitised curve and risk table.
    Reconstruct {
        #[arg(long)]
        steps: PathBuf,
        #[arg(long)]
        risk: PathBuf,
        #[arg(long)]
        arm: String,
        /// Reported total events.
        #[arg(long)]
        events: Option<usize>,
    },
    /// Cox hazard ratio between two arms of an IPD file.
    Cox {
        #[arg(long)]
        ipd: PathBuf,
        /// Arm used as the comparator.
        #[arg(long)]
        reference: String,
    },
    /// Weibull AFT fit of an IPD file (all arms pooled unless `--arm`).
    Weibull {
        #[arg(long)]
        ipd: PathBuf,
        #[arg(long)]
        arm: Option<String>,
    },
    /// Pairwise meta-analysis of one contrast.
    Meta {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "fixed")]
        model: Model,
        #[arg(long, default_value = "OS")]
        outcome: Outcome,
        /// `TREATMENT/COMPARATOR`; needed when the data hold several.
        #[arg(long)]
        contrast: Option<String>,
    },
    /// Bivariate meta-analysis predicting missing outcomes.
    Brma {
        #[arg(long)]
        data: PathBuf,
        /// `study=NAME,outcome=OS|PFS`; repeatable.
        #[arg(long)]
        predict: Vec<String>,
    },
    /// Indirect comparison through a common comparator, each leg pooled
    /// with a fixed-effect model.
    Indirect {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        treatment: String,
        #[arg(long)]
        via: String,
        #[arg(long)]
        comparator: String,
        #[arg(long, default_value = "OS")]
        outcome: Outcome,
    },
    /// Random-effects network meta-analysis.
    Nma {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "OS")]
        outcome: Outcome,
        #[arg(long)]
        reference: Option<String>,
    },
    /// Probabilistic sensitivity analysis of a cohort model.
    Markov {
        #[arg(long)]
        model: PathBuf,
    },
    /// Acceptability curve from PSA samples.
    Ceac {
        #[arg(long)]
        psa: PathBuf,
        /// `lo:hi:step`
        #[arg(long, default_value = "0:100000:500")]
        thresholds: String,
    },
    /// The whole pipeline from `--config`.
    Run,
    /// Write the bundled case study (fixture and config) to `--out`.
    CaseStudy {
        /// Run the pipeline on it too, into `<out>/results`.
        #[arg(long)]
        run: bool,
    },
}

enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Lib(e)) => {
            eprintln!("error: {e}");
            match e.kind() {
                ErrorKind::Data => ExitCode::from(2),
                ErrorKind::Numerical => ExitCode::from(3),
            }
        }
    }
}

fn write_or_print(out: Option<&Path>, body: &str) -> CliResult {
    match out {
        Some(p) => std::fs::write(p, body).map_err(|e| Error::io(p, e).into()),
        // a closed pipe (`| head`) is not an error
        None => match std::io::stdout().lock().write_all(body.as_bytes()) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                Err(Error::io("<stdout>", e).into())
            }
            _ => Ok(()),
        },
    }
}

fn one_contrast(
    rows: Vec<StudyOutcome>,
    outcome: Outcome,
    contrast: Option<&str>,
) -> CliResult<Vec<StudyOutcome>> {
    let mut rows: Vec<StudyOutcome> = rows
        .into_iter()
        .filter(|r| r.outcome == outcome && r.observed().is_some())
        .collect();
    if let Some(c) = contrast {
        let Some((t, r)) = c.split_once('/') else {
            return usage(format!(
                "bad --contrast `{c}`: expected TREATMENT/COMPARATOR"
            ));
        };
        rows.retain(|x| x.treatment == t && x.comparator == r);
    }
    let mut seen: Vec<String> = rows
        .iter()
        .map(|r| format!("{}/{}", r.treatment, r.comparator))
        .collect();
    seen.dedup();
    match seen.len() {
        0 => usage(format!("no {outcome} rows match")),
        1 => Ok(rows),
        _ => usage(format!(
            "several {outcome} contrasts ({}); pick one with --contrast",
            seen.join(", ")
        )),
    }
}

fn leg(rows: &[StudyOutcome], outcome: Outcome, t: &str, c: &str) -> CliResult<Contrast> {
    let mut sel = vec![];
    for r in rows
        .iter()
        .filter(|r| r.outcome == outcome && r.observed().is_some())
    {
        if r.treatment == t && r.comparator == c {
            sel.push(r.clone());
        } else if r.treatment == c && r.comparator == t {
            let (y, se) = r.observed().expect("filtered");
            sel.push(StudyOutcome::new(&r.study, t, c, outcome, -y, se)?);
        }
    }
    if sel.is_empty() {
        return usage(format!("no {outcome} rows compare {t} with {c}"));
    }
    let fe = fixed_effect_ma(&sel)?;
    Ok(Contrast::normal(t, c, fe.log_hr, fe.se))
}

fn parse_target(s: &str) -> CliResult<(String, Outcome)> {
    let (mut study, mut outcome) = (None, None);
    for part in s.split(',') {
        match part.split_once('=') {
            Some(("study", v)) => study = Some(v.to_string()),
            Some(("outcome", v)) => outcome = Some(v.parse::<Outcome>()?),
            _ => {
                return usage(format!(
                    "bad --predict `{s}`: expected study=NAME,outcome=OS|PFS"
                ))
            }
        }
    }
    match (study, outcome) {
        (Some(s), Some(o)) => Ok((s, o)),
        _ => usage(format!(
            "bad --predict `{s}`: expected study=NAME,outcome=OS|PFS"
        )),
    }
}

fn parse_grid(s: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let nums: Option<Vec<f64>> = parts.iter().map(|p| p.trim().parse().ok()).collect();
    match nums.as_deref() {
        Some(&[lo, hi, step]) => Ok(threshold_grid(lo, hi, step)?),
        _ => usage(format!("bad --thresholds `{s}`: expected lo:hi:step")),
    }
}

fn load_config(common: &Common) -> CliResult<PipelineConfig> {
    let Some(path) = &common.config else {
        return usage("--config is required");
    };
    let mut cfg = PipelineConfig::from_file(path)?;
    apply_overrides(&mut cfg, common);
    Ok(cfg)
}

fn apply_overrides(cfg: &mut PipelineConfig, common: &Common) {
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.chain = common.override_chain(cfg.chain);
    if let Some(d) = common.draws {
        cfg.draws = d;
    }
    if common.workers.is_some() {
        cfg.workers = common.workers;
    }
}

fn run_config(cfg: &PipelineConfig, out: &Path) -> CliResult {
    let res = run_pipeline(cfg, out)?;
    for (name, m) in [
        ("two-state", &res.summary.two_state),
        ("three-state", &res.summary.three_state),
    ] {
        println!("{name} model, {} draws", m.draws);
        for o in &m.result.interventions {
            println!(
                "  {:<6} cost {:>10.0}  QALY {:.3}",
                o.label, o.mean_cost, o.mean_qaly
            );
        }
        for i in &m.result.increments {
            println!("  {i}");
        }
    }
    for w in &res.summary.warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {} files to {}", res.files.len(), out.display());
    Ok(())
}

fn run(cli: &Cli) -> CliResult {
    let c = &cli.common;
    let out = c.out.as_deref();
    match &cli.command {
        Command::Reconstruct {
            steps,
            risk,
            arm,
            events,
        } => {
            let curve = read_km_curve(steps, risk)?;
            let ipd = reconstruct_ipd(&curve, *events, arm)?;
            match out {
                Some(p) => write_ipd(p, &ipd)?,
                None => return usage("reconstruct needs --out"),
            }
            let d = ipd.iter().filter(|r| r.event).count();
            eprintln!("{} patients, {d} events", ipd.len());
        }
        Command::Cox { ipd, reference } => {
            let fit = cox_fit(&read_ipd(ipd)?, reference)?;
            println!(
                "{} vs {}: {}",
                fit.treatment,
                fit.reference,
                HrInterval::from_log(fit.log_hr, fit.se)
            );
        }
        Command::Weibull { ipd, arm } => {
            let mut data = read_ipd(ipd)?;
            if let Some(a) = arm {
                data.retain(|r| &r.arm == a);
            }
            let fit = weibull_fit(&data)?;
            write_or_print(
                out,
                &(serde_json::to_string_pretty(&fit).expect("serialises") + "\n"),
            )?;
        }
        Command::Meta {
            data,
            model,
            outcome,
            contrast,
        } => {
            let rows = one_contrast(read_studies(data)?, *outcome, contrast.as_deref())?;
            let hr = match model {
                Model::Fixed => fixed_effect_ma(&rows)?.hr,
                Model::Random => {
                    let cfg = ReConfig {
                        chain: c.chain(),
                        ..ReConfig::default()
                    };
                    let re = random_effects_ma(&rows, &cfg)?;
                    for w in &re.warnings {
                        eprintln!("warning: {w}");
                    }
                    re.hr
                }
            };
            println!("{hr}");
        }
        Command::Brma { data, predict } => {
            let mut rows = read_studies(data)?;
            for p in predict {
                let (study, outcome) = parse_target(p)?;
                if !rows
                    .iter()
                    .any(|r| r.study == study && r.outcome == outcome)
                {
                    let Some(other) = rows.iter().find(|r| r.study == study) else {
                        return usage(format!("--predict names unknown study `{study}`"));
                    };
                    rows.push(StudyOutcome::missing(
                        &study,
                        &other.treatment.clone(),
                        &other.comparator.clone(),
                        outcome,
                    ));
                }
            }
            let cfg = BrmaConfig {
                chain: c.chain(),
                ..BrmaConfig::default()
            };
            let post = brma_fit(&rows, &cfg)?;
            for p in &post.predictions {
                println!(
                    "{} {} {} vs {}: {}",
                    p.study, p.outcome, p.treatment, p.comparator, p.hr
                );
            }
            for w in &post.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(p) = out {
                let body =
                    serde_json::to_string_pretty(&post.predictions).expect("serialises") + "\n";
                std::fs::write(p, body).map_err(|e| Error::io(p, e))?;
            }
        }
        Command::Indirect {
            data,
            treatment,
            via,
            comparator,
            outcome,
        } => {
            let rows = read_studies(data)?;
            let first = leg(&rows, *outcome, treatment, via)?;
            let second = leg(&rows, *outcome, via, comparator)?;
            println!("{}", bucher_indirect(&first, &second)?.hr()?);
        }
        Command::Nma {
            data,
            outcome,
            reference,
        } => {
            let graph = ContrastGraph::new(&read_studies(data)?, *outcome)?;
            let cfg = ReConfig {
                chain: c.chain(),
                ..ReConfig::default()
            };
            let res = nma_fit(&graph, reference.as_deref(), &cfg)?;
            for k in res.all_contrasts()? {
                println!("{} vs {}: {}", k.treatment, k.comparator, k.hr()?);
            }
        }
        Command::Markov { model } => {
            let spec = ModelSpec::from_json_file(model)?;
            let res = run_psa(&spec, c.draws.unwrap_or(5000), c.seed(), c.workers)?;
            if let Some(p) = out {
                write_psa(p, &res.samples)?;
            }
            let r = CeResult::new(&res.samples, &[20_000.0, 30_000.0])?;
            for o in &r.interventions {
                println!(
                    "{:<6} cost {:>10.0}  QALY {:.3}",
                    o.label, o.mean_cost, o.mean_qaly
                );
            }
            for i in &r.increments {
                println!("{i}");
            }
        }
        Command::Ceac { psa, thresholds } => {
            let curve = ceac(&read_psa(psa)?, &parse_grid(thresholds)?)?;
            match out {
                Some(p) => curve.write_csv(p)?,
                None => {
                    let mut body = String::from("threshold,intervention,probability\n");
                    for r in curve.rows() {
                        body.push_str(&format!(
                            "{},{},{}\n",
                            r.threshold, r.intervention, r.probability
                        ));
                    }
                    write_or_print(None, &body)?;
                }
            }
        }
        Command::Run => {
            let cfg = load_config(c)?;
            let Some(out) = out else {
                return usage("run needs --out");
            };
            run_config(&cfg, out)?;
        }
        Command::CaseStudy { run } => {
            let Some(dir) = out else {
                return usage("case-study needs --out");
            };
            let path = write_case_study(dir, c.seed())?;
            println!("wrote {}", path.display());
            if *run {
                let mut cfg = PipelineConfig::from_file(&path)?;
                apply_overrides(&mut cfg, c);
                run_config(&cfg, &dir.join("results"))?;
            }
        }
    }
    Ok(())
}
