use serde::Serialize;

use super::study::StudyOutcome;
use crate::error::{Error, Result};
use crate::mcmc::{diagnose, run_chain, ChainConfig, ChainOutput, Diagnostics, ModelGraph};
use crate::stats::{Dist, DrawSummary, HrInterval};

/// Closed-form pooled estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Pooled {
    pub log_hr: f64,
    pub se: f64,
    pub hr: HrInterval,
}

/// Complete rows, after checking they all describe one contrast and outcome.
pub(crate) fn complete_rows(rows: &[StudyOutcome]) -> Result<Vec<(f64, f64)>> {
    if let Some(first) = rows.first() {
        for r in rows {
            if !r.same_contrast(first) || r.outcome != first.outcome {
                return Err(Error::LabelMismatch(format!(
                    "cannot pool {} {}/{} with {} {}/{}",
                    r.outcome,
                    r.treatment,
                    r.comparator,
                    first.outcome,
                    first.treatment,
                    first.comparator
                )));
            }
        }
    }
    let ys: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.observed()).collect();
    if ys.is_empty() {
        return Err(Error::InsufficientData(
            "no study has both a log HR and a standard error".into(),
        ));
    }
    Ok(ys)
}

/// Inverse-variance fixed-effect pooling.
///
/// ```
/// use evsyn::synthesis::{fixed_effect_ma, Outcome, StudyOutcome};
///
/// let rows = [
///     StudyOutcome::from_hr_ci("CALGB 9182", "M+P", "P", Outcome::Os, 0.96, 0.732, 1.251)?,
///     StudyOutcome::from_hr_ci("CCI-NOV22", "M+P", "P", Outcome::Os, 0.81, 0.590, 1.110)?,
///     StudyOutcome::from_hr_ci("Berry", "M+P", "P", Outcome::Os, 0.95, 0.628, 1.432)?,
/// ];
/// let pooled = fixed_effect_ma(&rows)?;
/// assert_eq!(pooled.hr.to_string(), "0.905 (0.753, 1.087)");
/// # Ok::<(), evsyn::Error>(())
/// ```
pub fn fixed_effect_ma(rows: &[StudyOutcome]) -> Result<Pooled> {
    let ys = complete_rows(rows)?;
    let w: f64 = ys.iter().map(|(_, se)| 1.0 / (se * se)).sum();
    let log_hr = ys.iter().map(|(y, se)| y / (se * se)).sum::<f64>() / w;
    let se = 1.0 / w.sqrt();
    Ok(Pooled {
        log_hr,
        se,
        hr: HrInterval::from_log(log_hr, se),
    })
}

/// Priors and run length for [`random_effects_ma`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReConfig {
    pub mean_prior: Dist,
    pub tau_prior: Dist,
    pub chain: ChainConfig,
}

impl Default for ReConfig {
    /// `Normal(0, 10^3)` on the pooled log HR and `HalfNormal(0, 10^3)` on
    /// the between-study SD (both variances), 30,000 iterations with 15,000
    /// burn-in, two chains.
    fn default() -> Self {
        ReConfig {
            mean_prior: Dist::Normal {
                mean: 0.0,
                sd: 1e3f64.sqrt(),
            },
            tau_prior: Dist::HalfNormal { sd: 1e3f64.sqrt() },
            chain: ChainConfig::default().chains(2),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ReResult {
    /// Pooled log HR.
    pub log_hr: DrawSummary,
    pub tau: DrawSummary,
    /// exp(median) with the exponentiated 95% CrI.
    pub hr: HrInterval,
    pub output: Option<ChainOutput>,
    pub diagnostics: Option<Diagnostics>,
    pub warnings: Vec<String>,
}

/// Bayesian normal-normal random-effects meta-analysis with `y_i ~ N(mu_i,
/// se_i^2)` and `mu_i ~ N(eta, tau^2)`. The study effects are integrated out
/// (`y_i ~ N(eta, se_i^2 + tau^2)`), which leaves the same posterior for
/// `eta` and `tau` and mixes far better when `tau` is near zero. A single
/// study falls back to the fixed-effect estimate with a warning.
pub fn random_effects_ma(rows: &[StudyOutcome], config: &ReConfig) -> Result<ReResult> {
    let ys = complete_rows(rows)?;
    if ys.len() == 1 {
        let fe = fixed_effect_ma(rows)?;
        let point = DrawSummary {
            mean: fe.log_hr,
            sd: fe.se,
            median: fe.log_hr,
            lower: fe.log_hr - 1.96 * fe.se,
            upper: fe.log_hr + 1.96 * fe.se,
            n: 1,
        };
        let zero = DrawSummary {
            mean: 0.0,
            sd: 0.0,
            median: 0.0,
            lower: 0.0,
            upper: 0.0,
            n: 1,
        };
        return Ok(ReResult {
            log_hr: point,
            tau: zero,
            hr: fe.hr,
            output: None,
            diagnostics: None,
            warnings: vec![
                "only one study: heterogeneity is not estimable, reporting the fixed-effect result"
                    .into(),
            ],
        });
    }
    let mut m = ModelGraph::new();
    let eta = m.param("eta", config.mean_prior)?;
    let tau = m.param("tau", config.tau_prior)?;
    for &(y, se) in &ys {
        m.normal_factor(
            move |t| y - eta.get(t),
            move |t| (se * se + tau.get(t).powi(2)).sqrt(),
            &[eta],
            &[tau],
        )?;
    }
    let out = run_chain(&m, &config.chain)?;
    let log_hr = out.summary("eta")?;
    let diagnostics = diagnose(&out).ok();
    let mut warnings = out.warnings.clone();
    if let Some(d) = &diagnostics {
        if !d.converged() {
            warnings.push(format!(
                "split-R̂ {:.3} exceeds threshold",
                d.max_rhat().unwrap_or(f64::NAN)
            ));
        }
    }
    Ok(ReResult {
        log_hr,
        tau: out.summary("tau")?,
        hr: log_hr.to_hr(),
        output: Some(out),
        diagnostics,
        warnings,
    })
}
