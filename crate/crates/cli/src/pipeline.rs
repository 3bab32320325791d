use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use evsyn::econ::{ce_plane, ceac, ceac_svg, plane_svg, threshold_grid, write_plane, CeResult};
use evsyn::markov::{run_psa, write_psa, ModelSpec, PsaResult, TransitionGen, Variant};
use evsyn::mcmc::ChainConfig;
use evsyn::stats::{Dist, HrInterval};
use evsyn::survival::{
    cox_fit, km_fit, read_km_curve, reconstruct_ipd, restricted_mean, weibull_fit, IpdRecord,
    MeanSurvival, WeibullFit,
};
use evsyn::synthesis::{
    brma_fit, bucher_indirect, fixed_effect_ma, random_effects_ma, read_studies, write_studies,
    BrmaConfig, BrmaPosterior, Contrast, Outcome, Prediction, ReConfig, StudyOutcome,
    VarianceModel,
};
use evsyn::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Edge, Estimate, Link, PipelineConfig, Slot, Source};

/// Seed offsets so every stochastic stage has its own stream.
const SEED_PSA_2: u64 = 1;
const SEED_PSA_3: u64 = 2;
const SEED_META: u64 = 100;
const Z975: f64 = 1.959_963_984_540_054;

fn stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| Error::Stage {
        stage: name.into(),
        source: Box::new(e),
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Files land as `<name>.partial` and are renamed only once every stage
/// has succeeded, so a failed run leaves its partial outputs marked.
struct Outputs {
    dir: PathBuf,
    names: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            names: vec![],
        })
    }

    fn partial(&mut self, name: &str) -> PathBuf {
        self.names.push(name.to_string());
        self.dir.join(format!("{name}.partial"))
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let p = self.partial(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut body = serde_json::to_string_pretty(value).expect("outputs serialise");
        body.push('\n');
        self.text(name, &body)
    }

    fn finish(self) -> Result<Vec<PathBuf>> {
        let mut out = vec![];
        for n in &self.names {
            let from = self.dir.join(format!("{n}.partial"));
            let to = self.dir.join(n);
            std::fs::rename(&from, &to).map_err(|e| Error::io(&from, e))?;
            out.push(to);
        }
        Ok(out)
    }
}

/// One reconstructed arm.
#[derive(Clone, Debug, Serialize)]
pub struct ArmSummary {
    pub study: String,
    pub outcome: Outcome,
    pub arm: String,
    pub patients: usize,
    pub events: usize,
    pub weibull: Option<WeibullFit>,
    /// Restricted to the last observation.
    pub mean: MeanSurvival,
    /// Log of events per patient-month, with SE `1/sqrt(events)`.
    pub log_rate: f64,
    pub log_rate_se: f64,
    #[serde(skip)]
    pub ipd: Vec<IpdRecord>,
}

fn summarise_arm(
    study: &str,
    outcome: Outcome,
    arm: &str,
    ipd: Vec<IpdRecord>,
) -> Result<ArmSummary> {
    let fit = km_fit(&ipd)?;
    let horizon = ipd.iter().map(|r| r.time).fold(0.0, f64::max);
    let events = ipd.iter().filter(|r| r.event).count();
    if events == 0 {
        return Err(Error::InsufficientData(format!(
            "{study} {outcome} {arm}: no events"
        )));
    }
    let exposure: f64 = ipd.iter().map(|r| r.time).sum();
    Ok(ArmSummary {
        study: study.into(),
        outcome,
        arm: arm.into(),
        patients: ipd.len(),
        events,
        weibull: weibull_fit(&ipd).ok(),
        mean: restricted_mean(&fit, horizon)?,
        log_rate: (events as f64 / exposure).ln(),
        log_rate_se: 1.0 / (events as f64).sqrt(),
        ipd,
    })
}

/// A contrast estimate available to links and indirect comparisons.
#[derive(Clone, Debug, Serialize)]
pub struct EffectEntry {
    pub outcome: Outcome,
    pub treatment: String,
    pub comparator: String,
    pub estimate: Estimate,
    pub log_hr: f64,
    pub se: f64,
    pub hr: HrInterval,
    pub studies: usize,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Effects(pub Vec<EffectEntry>);

impl Effects {
    fn push(
        &mut self,
        outcome: Outcome,
        t: &str,
        c: &str,
        estimate: Estimate,
        log_hr: f64,
        se: f64,
        hr: HrInterval,
        n: usize,
    ) {
        self.0.push(EffectEntry {
            outcome,
            treatment: t.into(),
            comparator: c.into(),
            estimate,
            log_hr,
            se,
            hr,
            studies: n,
        });
    }

    /// `(log HR, SE)` of `t` vs `c`, in either stored orientation.
    pub fn get(
        &self,
        outcome: Outcome,
        t: &str,
        c: &str,
        estimate: Estimate,
    ) -> Result<(f64, f64)> {
        for e in &self.0 {
            if e.outcome != outcome || e.estimate != estimate {
                continue;
            }
            if e.treatment == t && e.comparator == c {
                return Ok((e.log_hr, e.se));
            }
            if e.treatment == c && e.comparator == t {
                return Ok((-e.log_hr, e.se));
            }
        }
        Err(Error::LabelMismatch(format!(
            "no {estimate:?} estimate of {t} vs {c} on {outcome}"
        )))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BrmaSummary {
    pub studies: Vec<String>,
    pub predictions: Vec<Prediction>,
    pub max_rhat: Option<f64>,
    pub converged: bool,
    pub constraint_rejections: u64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelSummary {
    pub variant: Variant,
    pub draws: usize,
    pub weibull_rejections: u64,
    pub result: CeResult,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub version: String,
    pub seed: u64,
    pub arms: Vec<ArmSummary>,
    pub effects: Effects,
    pub brma: Option<BrmaSummary>,
    pub two_state: ModelSummary,
    pub three_state: ModelSummary,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct Digest2 {
    file: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    version: String,
    seed: u64,
    chain: ChainConfig,
    draws: usize,
    config_sha256: String,
    inputs: Vec<Digest2>,
    outputs: Vec<Digest2>,
}

/// Everything the pipeline produced, with the files it wrote.
#[derive(Debug)]
pub struct PipelineOutput {
    pub summary: Summary,
    pub two_state: PsaResult,
    pub three_state: PsaResult,
    pub files: Vec<PathBuf>,
}

/// Reconstruct, estimate, synthesise, then run both cohort models and
/// the decision outputs, writing everything into `out`.
pub fn run_pipeline(cfg: &PipelineConfig, out: &Path) -> Result<PipelineOutput> {
    stage("config", || cfg.validate())?;
    let mut files = Outputs::new(out)?;
    let mut warnings = vec![];

    // 1. reconstruct every arm
    let arms = stage("reconstruct", || {
        let mut arms = vec![];
        for c in &cfg.curves {
            for a in &c.arms {
                let curve = read_km_curve(&cfg.resolve(&a.steps), &cfg.resolve(&a.risk))?;
                let ipd = reconstruct_ipd(&curve, a.events, &a.arm).map_err(|e| {
                    Error::input(format!("{} {} {}: {e}", c.study, c.outcome, a.arm))
                })?;
                arms.push(summarise_arm(&c.study, c.outcome, &a.arm, ipd)?);
            }
        }
        Ok(arms)
    })?;

    // 2. Cox per study plus summary rows
    let rows = stage("cox", || {
        let mut rows = vec![];
        for c in &cfg.curves {
            let (Some(t), Some(r)) = (&c.treatment, &c.comparator) else {
                continue;
            };
            let data: Vec<IpdRecord> = arms
                .iter()
                .filter(|a| {
                    a.study == c.study && a.outcome == c.outcome && (&a.arm == t || &a.arm == r)
                })
                .flat_map(|a| a.ipd.iter().cloned())
                .collect();
            let fit = cox_fit(&data, r)?;
            if !fit.converged {
                warnings.push(format!(
                    "{} {}: Cox fit did not converge",
                    c.study, c.outcome
                ));
            }
            rows.push(StudyOutcome::new(
                &c.study, t, r, c.outcome, fit.log_hr, fit.se,
            )?);
        }
        if let Some(p) = &cfg.summaries {
            rows.extend(read_studies(&cfg.resolve(p))?);
        }
        for o in [Outcome::Os, Outcome::Pfs] {
            let sel: Vec<StudyOutcome> = rows.iter().filter(|r| r.outcome == o).cloned().collect();
            let name = if o == Outcome::Os {
                "hr_os.csv"
            } else {
                "hr_pfs.csv"
            };
            write_studies(&files.partial(name), &sel)?;
        }
        Ok(rows)
    })?;

    // 3. pairwise pooling per contrast, and pooled arm event rates
    let mut effects = Effects::default();
    stage("meta", || {
        let mut contrasts: BTreeMap<(Outcome, String, String), Vec<StudyOutcome>> = BTreeMap::new();
        for r in rows.iter().filter(|r| r.observed().is_some()) {
            contrasts
                .entry((r.outcome, r.treatment.clone(), r.comparator.clone()))
                .or_default()
                .push(r.clone());
        }
        for (k, ((o, t, c), group)) in contrasts.iter().enumerate() {
            let fe = fixed_effect_ma(group)?;
            if group.len() == 1 {
                effects.push(*o, t, c, Estimate::Study, fe.log_hr, fe.se, fe.hr, 1);
            }
            effects.push(
                *o,
                t,
                c,
                Estimate::Fixed,
                fe.log_hr,
                fe.se,
                fe.hr,
                group.len(),
            );
            if group.len() >= 2 {
                let re = random_effects_ma(group, &re_config(cfg, SEED_META + k as u64))?;
                warnings.extend(re.warnings.iter().map(|w| format!("{o} {t}/{c}: {w}")));
                effects.push(
                    *o,
                    t,
                    c,
                    Estimate::Random,
                    re.log_hr.mean,
                    re.log_hr.sd,
                    re.hr,
                    group.len(),
                );
            }
        }
        Ok(())
    })?;

    // 4. BRMA prediction of unreported outcomes
    let brma = if cfg.predict.is_empty() {
        None
    } else {
        Some(stage("brma", || {
            let post = run_brma(cfg, &rows)?;
            for p in &post.predictions {
                // the predictive tails can be too heavy for moments
                let (m, s) = (
                    p.log_hr.median,
                    (p.log_hr.upper - p.log_hr.lower) / (2.0 * Z975),
                );
                effects.push(
                    p.outcome,
                    &p.treatment,
                    &p.comparator,
                    Estimate::Predicted,
                    m,
                    s,
                    p.hr,
                    1,
                );
            }
            let summary = BrmaSummary {
                studies: post.studies.clone(),
                predictions: post.predictions.clone(),
                max_rhat: post.diagnostics.as_ref().and_then(|d| d.max_rhat()),
                converged: post.diagnostics.as_ref().is_some_and(|d| d.converged()),
                constraint_rejections: post.constraint_rejections,
                warnings: post.warnings.clone(),
            };
            if !summary.converged {
                warnings.push("BRMA: convergence diagnostics flagged at least one node".into());
            }
            files.json("brma_predicted.json", &summary)?;
            Ok(summary)
        })?)
    };

    // 5. indirect comparisons
    stage("indirect", || {
        for spec in &cfg.indirect {
            let first_est = if effects
                .get(
                    spec.outcome,
                    &spec.treatment,
                    &spec.via,
                    Estimate::Predicted,
                )
                .is_ok()
            {
                Estimate::Predicted
            } else if effects
                .get(spec.outcome, &spec.treatment, &spec.via, Estimate::Study)
                .is_ok()
            {
                Estimate::Study
            } else {
                Estimate::Fixed
            };
            let (m1, s1) = effects.get(spec.outcome, &spec.treatment, &spec.via, first_est)?;
            let (m2, s2) =
                effects.get(spec.outcome, &spec.via, &spec.comparator, Estimate::Fixed)?;
            let r = bucher_indirect(
                &Contrast::normal(&spec.treatment, &spec.via, m1, s1),
                &Contrast::normal(&spec.via, &spec.comparator, m2, s2),
            )?;
            let (m, s) = r.moments()?;
            effects.push(
                spec.outcome,
                &spec.treatment,
                &spec.comparator,
                Estimate::Indirect,
                m,
                s,
                r.hr()?,
                0,
            );
        }
        Ok(())
    })?;

    // 6. cohort models
    let mut models = vec![];
    for (variant, offset, name) in [
        (Variant::TwoState, SEED_PSA_2, "2state"),
        (Variant::ThreeState, SEED_PSA_3, "3state"),
    ] {
        let res = stage(&format!("markov-{name}"), || {
            let spec = linked_model(cfg, variant, &arms, &effects)?;
            let res = run_psa(&spec, cfg.draws, cfg.seed.wrapping_add(offset), cfg.workers)?;
            write_psa(&files.partial(&format!("psa_{name}.csv")), &res.samples)?;
            Ok(res)
        })?;
        let summary = stage(&format!("econ-{name}"), || {
            let result = CeResult::new(&res.samples, &cfg.thresholds)?;
            let grid = threshold_grid(cfg.ceac.lo, cfg.ceac.hi, cfg.ceac.step)?;
            let curve = ceac(&res.samples, &grid)?;
            curve.write_csv(&files.partial(&format!("ceac_{name}.csv")))?;
            let plane = ce_plane(&res.samples, &cfg.plane.new, &cfg.plane.comparator)?;
            write_plane(&files.partial(&format!("plane_{name}.csv")), &plane)?;
            let title = format!("{} vs {} ({name})", cfg.plane.new, cfg.plane.comparator);
            let (ceac_name, plane_name) = match variant {
                Variant::ThreeState => ("ceac.svg".to_string(), "plane.svg".to_string()),
                Variant::TwoState => (format!("ceac_{name}.svg"), format!("plane_{name}.svg")),
            };
            files.text(&ceac_name, &ceac_svg(&curve))?;
            files.text(
                &plane_name,
                &plane_svg(&plane, &title, cfg.thresholds.first().copied()),
            )?;
            Ok(ModelSummary {
                variant,
                draws: res.draws(),
                weibull_rejections: res.weibull_rejections,
                result,
                warnings: res.warnings.clone(),
            })
        })?;
        models.push((res, summary));
    }
    let (three, two) = (
        models.pop().expect("two models"),
        models.pop().expect("two models"),
    );

    let summary = Summary {
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        arms,
        effects,
        brma,
        two_state: two.1,
        three_state: three.1,
        warnings,
    };
    stage("summary", || {
        files.json("summary.json", &summary)?;
        let digest = |p: &Path| -> Result<String> {
            Ok(sha256_hex(&std::fs::read(p).map_err(|e| Error::io(p, e))?))
        };
        let inputs = cfg
            .inputs()
            .iter()
            .map(|p| {
                Ok(Digest2 {
                    file: p.strip_prefix(&cfg.base).unwrap_or(p).display().to_string(),
                    sha256: digest(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let outputs = files
            .names
            .iter()
            .map(|n| {
                Ok(Digest2 {
                    file: n.clone(),
                    sha256: digest(&files.dir.join(format!("{n}.partial")))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = Manifest {
            version: summary.version.clone(),
            seed: cfg.seed,
            chain: cfg.chain,
            draws: cfg.draws,
            config_sha256: sha256_hex(cfg.to_json().as_bytes()),
            inputs,
            outputs,
        };
        files.json("manifest.json", &manifest)
    })?;
    Ok(PipelineOutput {
        summary,
        two_state: two.0,
        three_state: three.0,
        files: files.finish()?,
    })
}

fn re_config(cfg: &PipelineConfig, offset: u64) -> ReConfig {
    let mut chain = cfg.chain;
    chain.seed = cfg.seed.wrapping_add(offset);
    ReConfig {
        chain,
        ..ReConfig::default()
    }
}

/// BRMA over every study row, with a missing row added for each target.
pub fn run_brma(cfg: &PipelineConfig, rows: &[StudyOutcome]) -> Result<BrmaPosterior> {
    let mut rows = rows.to_vec();
    for t in &cfg.predict {
        if rows
            .iter()
            .any(|r| r.study == t.study && r.outcome == t.outcome)
        {
            continue;
        }
        let other = rows.iter().find(|r| r.study == t.study).ok_or_else(|| {
            Error::LabelMismatch(format!("cannot predict for unknown study `{}`", t.study))
        })?;
        rows.push(StudyOutcome::missing(
            &t.study,
            &other.treatment,
            &other.comparator,
            t.outcome,
        ));
    }
    let base = BrmaConfig::default();
    let tau = Dist::half_normal(cfg.brma.tau_sd)?;
    let config = BrmaConfig {
        chain: ChainConfig {
            seed: cfg.seed,
            ..cfg.chain
        },
        tau_os_prior: tau,
        tau_pfs_prior: tau,
        variance: VarianceModel {
            sd_prior: Dist::half_normal(cfg.brma.logvar_sd)?,
            ..base.variance
        },
        ..base
    };
    brma_fit(&rows, &config)
}

fn edge_mut<'a>(spec: &'a mut ModelSpec, link: &Link) -> Result<&'a mut TransitionGen> {
    let iv = spec
        .interventions
        .iter_mut()
        .find(|i| i.label == link.intervention)
        .ok_or_else(|| {
            Error::LabelMismatch(format!(
                "link names unknown intervention `{}`",
                link.intervention
            ))
        })?;
    let t = &mut iv.transitions;
    match link.edge {
        Edge::StdDeath => Some(&mut t.std_death),
        Edge::StdPd => t.std_pd.as_mut(),
        Edge::PdDeath => t.pd_death.as_mut(),
    }
    .ok_or_else(|| {
        Error::param(format!(
            "{}: no {:?} edge to link",
            link.intervention, link.edge
        ))
    })
}

fn find_arm<'a>(
    arms: &'a [ArmSummary],
    study: &str,
    outcome: Outcome,
    arm: &str,
) -> Result<&'a ArmSummary> {
    arms.iter()
        .find(|a| a.study == study && a.outcome == outcome && a.arm == arm)
        .ok_or_else(|| {
            Error::LabelMismatch(format!("no reconstructed arm {study} {outcome} {arm}"))
        })
}

/// Normal(mean, se) for mean survival from a link source.
fn mean_source(src: &Source, arms: &[ArmSummary]) -> Result<Dist> {
    match src {
        Source::Arm {
            study,
            outcome,
            arm,
        } => {
            let a = find_arm(arms, study, *outcome, arm)?;
            Dist::normal(a.mean.mean, a.mean.se)
        }
        Source::PooledArm { outcome, arm } => {
            let rows: Vec<StudyOutcome> = arms
                .iter()
                .filter(|a| a.outcome == *outcome && a.arm == *arm)
                .map(|a| {
                    StudyOutcome::new(&a.study, arm, "rate", *outcome, a.log_rate, a.log_rate_se)
                })
                .collect::<Result<_>>()?;
            if rows.is_empty() {
                return Err(Error::LabelMismatch(format!(
                    "no reconstructed {outcome} arms labelled `{arm}`"
                )));
            }
            let fe = fixed_effect_ma(&rows)?;
            // mean of an exponential is the reciprocal rate; delta method for the SE
            let mean = (-fe.log_hr).exp();
            Dist::normal(mean, mean * fe.se)
        }
        Source::Effect { .. } => Err(Error::param("a mean slot needs an arm source")),
    }
}

/// The model of `variant` with every link applied.
pub fn linked_model(
    cfg: &PipelineConfig,
    variant: Variant,
    arms: &[ArmSummary],
    effects: &Effects,
) -> Result<ModelSpec> {
    let mut spec = cfg.model(variant).clone();
    for link in cfg.links.iter().filter(|l| l.model == variant) {
        let ctx = |e: Error| {
            Error::param(format!(
                "link {} {:?} {:?}: {e}",
                link.intervention, link.edge, link.slot
            ))
        };
        let value = match (link.slot, &link.source) {
            (
                Slot::Weibull,
                Source::Arm {
                    study,
                    outcome,
                    arm,
                },
            ) => {
                let a = find_arm(arms, study, *outcome, arm).map_err(ctx)?;
                let w = a.weibull.as_ref().ok_or_else(|| {
                    ctx(Error::NonConvergence(format!(
                        "no Weibull fit for {study} {outcome} {arm}"
                    )))
                })?;
                Linked::Weibull(TransitionGen::WeibullAft {
                    intercept: w.intercept,
                    scale: w.scale,
                    cov: w.cov,
                })
            }
            (
                Slot::LogHr,
                Source::Effect {
                    outcome,
                    treatment,
                    comparator,
                    estimate,
                },
            ) => {
                let (m, s) = effects
                    .get(*outcome, treatment, comparator, *estimate)
                    .map_err(ctx)?;
                Linked::Dist(Dist::normal(m, s).map_err(ctx)?)
            }
            (Slot::Mean | Slot::Less, src) => Linked::Dist(mean_source(src, arms).map_err(ctx)?),
            _ => return Err(ctx(Error::param("slot and source do not match"))),
        };
        let gen = edge_mut(&mut spec, link).map_err(ctx)?;
        match (link.slot, gen, value) {
            (Slot::Weibull, TransitionGen::HazardScaled { base, .. }, Linked::Weibull(w)) => {
                **base = w
            }
            (Slot::Weibull, g @ TransitionGen::WeibullAft { .. }, Linked::Weibull(w)) => *g = w,
            (Slot::LogHr, TransitionGen::HazardScaled { log_hr, .. }, Linked::Dist(d)) => {
                *log_hr = d
            }
            (Slot::Mean, TransitionGen::ExponentialFromMean { mean, .. }, Linked::Dist(d)) => {
                *mean = d
            }
            (Slot::Less, TransitionGen::ExponentialFromMean { less, .. }, Linked::Dist(d)) => {
                *less = Some(d)
            }
            _ => return Err(ctx(Error::param("the edge has no such slot"))),
        }
    }
    spec.validate()?;
    Ok(spec)
}

enum Linked {
    Weibull(TransitionGen),
    Dist(Dist),
}
