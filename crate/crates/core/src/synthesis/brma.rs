use serde::Serialize;

use super::study::{Outcome, StudyOutcome};
use crate::error::{Error, Result};
use crate::mcmc::{
    diagnose, run_chain, ChainConfig, ChainOutput, Diagnostics, ModelGraph, ParamId,
};
use crate::stats::{Dist, DrawSummary, HrInterval};

/// Hierarchy for log within-study variances, used to fill in the standard
/// error of an unreported effect: `ln se_i^2 ~ Normal(m, s^2)` across the
/// studies reporting that outcome.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceModel {
    pub mean_prior: Dist,
    pub sd_prior: Dist,
}

impl Default for VarianceModel {
    /// `m ~ Normal(0, 10^3)` (variance), `s ~ HalfNormal` with SD 10.
    fn default() -> Self {
        VarianceModel {
            mean_prior: Dist::Normal {
                mean: 0.0,
                sd: 1e3f64.sqrt(),
            },
            sd_prior: Dist::HalfNormal { sd: 10.0 },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrmaConfig {
    pub eta_os_prior: Dist,
    pub lambda0_prior: Dist,
    pub tau_os_prior: Dist,
    pub tau_pfs_prior: Dist,
    pub rho_b_prior: Dist,
    /// Shared by every study's within-study correlation.
    pub rho_w_prior: Dist,
    pub variance: VarianceModel,
    pub chain: ChainConfig,
}

impl Default for BrmaConfig {
    fn default() -> Self {
        let vague = Dist::Normal {
            mean: 0.0,
            sd: 1e3f64.sqrt(),
        };
        let hn = Dist::HalfNormal { sd: 1e3f64.sqrt() };
        let u = Dist::Uniform { lo: -1.0, hi: 1.0 };
        BrmaConfig {
            eta_os_prior: vague,
            lambda0_prior: vague,
            tau_os_prior: hn,
            tau_pfs_prior: hn,
            rho_b_prior: u,
            rho_w_prior: u,
            variance: VarianceModel::default(),
            chain: ChainConfig::default().chains(2),
        }
    }
}

/// Predicted effect for an unreported study outcome.
#[derive(Clone, Debug, Serialize)]
pub struct Prediction {
    pub study: String,
    pub treatment: String,
    pub comparator: String,
    pub outcome: Outcome,
    /// Node holding the draws, for [`ChainOutput::draws`].
    pub node: String,
    pub log_hr: DrawSummary,
    /// Posterior median of the study's standard error (the reported one if
    /// it was supplied).
    pub se: f64,
    pub hr: HrInterval,
}

#[derive(Clone, Debug)]
pub struct BrmaPosterior {
    pub studies: Vec<String>,
    pub output: ChainOutput,
    pub predictions: Vec<Prediction>,
    pub diagnostics: Option<Diagnostics>,
    /// Proposals rejected because they gave a negative conditional
    /// between-study variance.
    pub constraint_rejections: u64,
    pub warnings: Vec<String>,
}

impl BrmaPosterior {
    pub fn summary(&self, node: &str) -> Result<DrawSummary> {
        self.output.summary(node)
    }

    pub fn hr_os(&self) -> Result<HrInterval> {
        Ok(self.output.summary("eta_os")?.to_hr())
    }

    pub fn hr_pfs(&self) -> Result<HrInterval> {
        Ok(self.output.summary("lambda0")?.to_hr())
    }

    pub fn prediction(&self, study: &str, outcome: Outcome) -> Option<&Prediction> {
        self.predictions
            .iter()
            .find(|p| p.study == study && p.outcome == outcome)
    }
}

/// Observed value, or a node of the model.
#[derive(Clone, Copy)]
enum Src {
    Fixed(f64),
    Node(ParamId),
}

impl Src {
    fn at(self, t: &[f64]) -> f64 {
        match self {
            Src::Fixed(v) => v,
            Src::Node(p) => p.get(t),
        }
    }

    fn node(self) -> Option<ParamId> {
        match self {
            Src::Fixed(_) => None,
            Src::Node(p) => Some(p),
        }
    }
}

/// One outcome of one study: its effect and its log variance.
#[derive(Clone, Copy)]
struct Arm {
    y: Src,
    logvar: Src,
}

impl Arm {
    fn sd(self, t: &[f64]) -> f64 {
        (0.5 * self.logvar.at(t)).exp()
    }
}

struct StudyRows {
    name: String,
    os: Option<StudyOutcome>,
    pfs: Option<StudyOutcome>,
}

fn group(rows: &[StudyOutcome]) -> Result<Vec<StudyRows>> {
    let mut out: Vec<StudyRows> = vec![];
    for r in rows {
        r.validate()?;
        let k = match out.iter().position(|s| s.name == r.study) {
            Some(k) => k,
            None => {
                out.push(StudyRows {
                    name: r.study.clone(),
                    os: None,
                    pfs: None,
                });
                out.len() - 1
            }
        };
        let slot = match r.outcome {
            Outcome::Os => &mut out[k].os,
            Outcome::Pfs => &mut out[k].pfs,
        };
        if slot.is_some() {
            return Err(Error::input(format!("{}: two {} rows", r.study, r.outcome)));
        }
        *slot = Some(r.clone());
    }
    for s in &out {
        if let (Some(a), Some(b)) = (&s.os, &s.pfs) {
            if !a.same_contrast(b) {
                return Err(Error::LabelMismatch(format!(
                    "{}: OS is {}/{} but PFS is {}/{}",
                    s.name, a.treatment, a.comparator, b.treatment, b.comparator
                )));
            }
        }
    }
    Ok(out)
}

/// Builds the exchangeable log-variance hierarchy for one outcome and
/// returns its `(m, s)` nodes.
fn variance_hierarchy(
    m: &mut ModelGraph,
    tag: &str,
    observed: &[f64],
    vm: &VarianceModel,
) -> Result<(ParamId, ParamId)> {
    if observed.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no reported {tag} standard error to borrow a missing one from"
        )));
    }
    let centre = observed.iter().sum::<f64>() / observed.len() as f64;
    let mean = m.param(&format!("logvar_mean_{tag}"), vm.mean_prior)?;
    let sd = m.param(&format!("logvar_sd_{tag}"), vm.sd_prior)?;
    m.set_init(mean, centre);
    m.set_init(sd, 1.0);
    for &v in observed {
        m.normal_factor(move |t| v - mean.get(t), move |t| sd.get(t), &[mean], &[sd])?;
    }
    Ok((mean, sd))
}

/// Bivariate random-effects meta-analysis of log HRs on OS and PFS in
/// product-normal form:
///
/// ```text
/// mu_os[i]  ~ N(eta_os, tau_os^2)
/// mu_pfs[i] ~ N(lambda0 + lambda1 (mu_os[i] - mean(mu_os)), psi_pfs^2)
/// lambda1   = rho_b tau_pfs / tau_os,  psi_pfs^2 = tau_pfs^2 - lambda1^2 tau_os^2
/// ```
///
/// with each study's observed pair bivariate normal around `(mu_os[i],
/// mu_pfs[i])`, its within-study correlation `rho_w[i]` carrying its own
/// prior. A row with a missing `log_hr` is imputed: its effect becomes a
/// node of the model (and its standard error, unless supplied, is drawn
/// from a log-normal hierarchy over the reported ones), and the retained
/// draws of that node are the prediction. Studies may compare different
/// treatments; within a study both outcomes must share one contrast.
///
/// Recorded nodes besides the parameters: `lambda1`, `psi2_os`,
/// `psi2_pfs`, `hr_os`, `hr_pfs`, and `y_os[study]` / `y_pfs[study]` for
/// imputed effects.
pub fn brma_fit(rows: &[StudyOutcome], config: &BrmaConfig) -> Result<BrmaPosterior> {
    let studies = group(rows)?;
    let complete = studies
        .iter()
        .filter(|s| {
            s.os.as_ref().is_some_and(|r| r.observed().is_some())
                && s.pfs.as_ref().is_some_and(|r| r.observed().is_some())
        })
        .count();
    if complete < 2 {
        return Err(Error::Identifiability(format!(
            "{complete} stud{} report both outcomes; the between-study correlation needs at least 2",
            if complete == 1 { "y" } else { "ies" }
        )));
    }

    let mut m = ModelGraph::new();
    let eta_os = m.param("eta_os", config.eta_os_prior)?;
    let lambda0 = m.param("lambda0", config.lambda0_prior)?;
    let tau_os = m.param("tau_os", config.tau_os_prior)?;
    let tau_pfs = m.param("tau_pfs", config.tau_pfs_prior)?;
    let rho_b = m.param("rho_b", config.rho_b_prior)?;

    let observed_logvar = |o: Outcome| -> Vec<f64> {
        studies
            .iter()
            .filter_map(|s| match o {
                Outcome::Os => s.os.as_ref(),
                Outcome::Pfs => s.pfs.as_ref(),
            })
            .filter_map(|r| r.se)
            .map(|se| 2.0 * se.ln())
            .collect()
    };
    let needs_hierarchy = |o: Outcome| {
        studies.iter().any(|s| {
            let r = match o {
                Outcome::Os => s.os.as_ref(),
                Outcome::Pfs => s.pfs.as_ref(),
            };
            r.is_some_and(|r| r.se.is_none())
        })
    };
    let mut hier = [None, None];
    for (k, o) in [Outcome::Os, Outcome::Pfs].into_iter().enumerate() {
        if needs_hierarchy(o) {
            let tag = if k == 0 { "os" } else { "pfs" };
            hier[k] = Some(variance_hierarchy(
                &mut m,
                tag,
                &observed_logvar(o),
                &config.variance,
            )?);
        }
    }

    // study-level true effects, started at the observed values
    let mut mu_os = vec![];
    let mut mu_pfs = vec![];
    let mut targets: Vec<(usize, Outcome, ParamId, Src)> = vec![];
    let mut arms: Vec<[Option<Arm>; 2]> = vec![];
    for (i, s) in studies.iter().enumerate() {
        let mo = m.latent(&format!("mu_os[{}]", s.name))?;
        let mp = m.latent(&format!("mu_pfs[{}]", s.name))?;
        mu_os.push(mo);
        mu_pfs.push(mp);
        let mut pair = [None, None];
        for (k, (row, mu)) in [(&s.os, mo), (&s.pfs, mp)].into_iter().enumerate() {
            let Some(r) = row else { continue };
            let tag = if k == 0 { "os" } else { "pfs" };
            let logvar = match (r.se, hier[k]) {
                (Some(se), _) => Src::Fixed(2.0 * se.ln()),
                (None, Some((mean, sd))) => {
                    let lv = m.latent(&format!("logvar_{tag}[{}]", s.name))?;
                    let centre = observed_logvar(r.outcome).iter().sum::<f64>()
                        / observed_logvar(r.outcome).len() as f64;
                    m.set_init(lv, centre);
                    m.normal_factor(
                        move |t| lv.get(t) - mean.get(t),
                        move |t| sd.get(t),
                        &[lv, mean],
                        &[sd],
                    )?;
                    Src::Node(lv)
                }
                (None, None) => unreachable!("hierarchy built for every missing se"),
            };
            let y = match r.log_hr {
                Some(v) => {
                    m.set_init(mu, v);
                    Src::Fixed(v)
                }
                None => {
                    let node = m.latent(&format!("y_{tag}[{}]", s.name))?;
                    targets.push((i, r.outcome, node, logvar));
                    Src::Node(node)
                }
            };
            pair[k] = Some(Arm { y, logvar });
        }
        arms.push(pair);
    }

    for (i, pair) in arms.iter().enumerate() {
        let (mo, mp) = (mu_os[i], mu_pfs[i]);
        match *pair {
            [Some(os), Some(pfs)] => {
                let rw = m.param(&format!("rho_w[{}]", studies[i].name), config.rho_w_prior)?;
                add_marginal_factor(&mut m, os, mo)?;
                // PFS given OS
                let mut linear = vec![mp, mo];
                linear.extend(pfs.y.node());
                linear.extend(os.y.node());
                let mut nonlinear = vec![rw];
                nonlinear.extend(pfs.logvar.node());
                nonlinear.extend(os.logvar.node());
                m.normal_factor(
                    move |t| {
                        let slope = rw.get(t) * pfs.sd(t) / os.sd(t);
                        pfs.y.at(t) - mp.get(t) - slope * (os.y.at(t) - mo.get(t))
                    },
                    move |t| pfs.sd(t) * (1.0 - rw.get(t).powi(2)).sqrt(),
                    &linear,
                    &nonlinear,
                )?;
            }
            [Some(os), None] => add_marginal_factor(&mut m, os, mo)?,
            [None, Some(pfs)] => add_marginal_factor(&mut m, pfs, mp)?,
            [None, None] => unreachable!("every study has a row"),
        }
    }

    // between-study structure
    for &mo in &mu_os {
        m.hierarchical_normal(mo, eta_os, tau_os)?;
    }
    let all_os = mu_os.clone();
    let n = all_os.len() as f64;
    for (i, &mp) in mu_pfs.iter().enumerate() {
        let mo = mu_os[i];
        let centre = all_os.clone();
        let mut linear = vec![mp, lambda0];
        linear.extend(&all_os);
        m.normal_factor(
            move |t| {
                let mean_os = centre.iter().map(|p| p.get(t)).sum::<f64>() / n;
                let l1 = rho_b.get(t) * tau_pfs.get(t) / tau_os.get(t);
                mp.get(t) - lambda0.get(t) - l1 * (mo.get(t) - mean_os)
            },
            move |t| psi2_pfs(t, rho_b, tau_os, tau_pfs).max(0.0).sqrt(),
            &linear,
            &[rho_b, tau_pfs, tau_os],
        )?;
    }
    m.custom_factor(&[rho_b, tau_os, tau_pfs], move |t| {
        if psi2_pfs(t, rho_b, tau_os, tau_pfs) >= 0.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    })?;

    // start the hyperparameters somewhere reasonable
    let centre = |o: Outcome| {
        let v: Vec<f64> = rows
            .iter()
            .filter(|r| r.outcome == o)
            .filter_map(|r| r.log_hr)
            .collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    m.set_init(eta_os, centre(Outcome::Os));
    m.set_init(lambda0, centre(Outcome::Pfs));
    if matches!(config.tau_os_prior, Dist::HalfNormal { .. }) {
        m.set_init(tau_os, 0.2);
    }
    if matches!(config.tau_pfs_prior, Dist::HalfNormal { .. }) {
        m.set_init(tau_pfs, 0.2);
    }
    for &(_, o, node, _) in &targets {
        m.set_init(node, centre(o));
    }

    m.deterministic("lambda1", move |t| {
        rho_b.get(t) * tau_pfs.get(t) / tau_os.get(t)
    })?;
    m.deterministic("psi2_os", move |t| tau_os.get(t).powi(2))?;
    m.deterministic("psi2_pfs", move |t| psi2_pfs(t, rho_b, tau_os, tau_pfs))?;
    m.deterministic("hr_os", move |t| eta_os.get(t).exp())?;
    m.deterministic("hr_pfs", move |t| lambda0.get(t).exp())?;

    let output = run_chain(&m, &config.chain)?;
    let mut predictions = vec![];
    for &(i, outcome, node, logvar) in &targets {
        let names = m.node_names();
        let draws = output.draws(&names[node.0])?;
        let log_hr = crate::stats::summarize(&draws)?;
        let se = match logvar {
            Src::Fixed(v) => (0.5 * v).exp(),
            Src::Node(p) => (0.5 * output.summary(&names[p.0])?.median).exp(),
        };
        let row = match outcome {
            Outcome::Os => studies[i].os.as_ref(),
            Outcome::Pfs => studies[i].pfs.as_ref(),
        }
        .expect("target row");
        predictions.push(Prediction {
            study: studies[i].name.clone(),
            treatment: row.treatment.clone(),
            comparator: row.comparator.clone(),
            outcome,
            node: m.node_names()[node.0].clone(),
            log_hr,
            se,
            hr: log_hr.to_hr(),
        });
    }
    let constraint_rejections = ["rho_b", "tau_os", "tau_pfs"]
        .iter()
        .map(|n| output.total_invalid(n))
        .sum::<Result<u64>>()?;
    let diagnostics = diagnose(&output).ok();
    let mut warnings = output.warnings.clone();
    if let Some(d) = &diagnostics {
        if !d.converged() {
            let worst: Vec<&str> = d
                .nodes
                .iter()
                .filter(|n| n.flagged)
                .map(|n| n.name.as_str())
                .collect();
            warnings.push(format!("split-R̂ above threshold for {}", worst.join(", ")));
        }
    }
    Ok(BrmaPosterior {
        studies: studies.into_iter().map(|s| s.name).collect(),
        output,
        predictions,
        diagnostics,
        constraint_rejections,
        warnings,
    })
}

fn psi2_pfs(t: &[f64], rho_b: ParamId, tau_os: ParamId, tau_pfs: ParamId) -> f64 {
    let l1 = rho_b.get(t) * tau_pfs.get(t) / tau_os.get(t);
    tau_pfs.get(t).powi(2) - l1 * l1 * tau_os.get(t).powi(2)
}

/// Marginal `y ~ N(mu, se^2)` for an outcome reported alone.
fn add_marginal_factor(m: &mut ModelGraph, arm: Arm, mu: ParamId) -> Result<()> {
    let mut linear = vec![mu];
    linear.extend(arm.y.node());
    let nonlinear: Vec<ParamId> = arm.logvar.node().into_iter().collect();
    m.normal_factor(
        move |t| arm.y.at(t) - mu.get(t),
        move |t| arm.sd(t),
        &linear,
        &nonlinear,
    )
}
