use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tp::{
    draw_weibull_params, exp_tp_from_mean, pd_death_mean, scaled_tp, weibull_tp, Discounting,
};
use crate::error::{Error, Result};
use crate::stats::{Dist, RandomStream, Sym2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Stable disease and death.
    TwoState,
    /// Stable disease, progressed disease and death.
    ThreeState,
}

/// How a per-cycle transition probability is generated for one PSA draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransitionGen {
    /// Weibull AFT coefficients `(β, α)` with their covariance; time runs
    /// from model start.
    WeibullAft {
        intercept: f64,
        scale: f64,
        cov: Sym2,
    },
    /// `base` with its hazard multiplied by `exp(log_hr)`.
    HazardScaled {
        base: Box<TransitionGen>,
        log_hr: Dist,
    },
    /// Constant hazard `1 / mean`. With `less`, the mean is `mean - less`
    /// (time after progression: mean survival minus mean time to
    /// progression).
    ExponentialFromMean {
        mean: Dist,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        less: Option<Dist>,
    },
    /// The same probability every cycle.
    Fixed { p: f64 },
}

/// A [`TransitionGen`] with its uncertain parameters drawn.
#[derive(Clone, Debug, PartialEq)]
pub enum Transition {
    Weibull { lambda: f64, gamma: f64 },
    Scaled { base: Box<Transition>, log_hr: f64 },
    Constant(f64),
}

impl Transition {
    /// Probability for the cycle ending at time `t` (cycle length `u`).
    pub fn prob(&self, t: f64, u: f64) -> Result<f64> {
        match self {
            Transition::Weibull { lambda, gamma } => weibull_tp(*lambda, *gamma, t, u),
            Transition::Scaled { base, log_hr } => scaled_tp(base.prob(t, u)?, *log_hr),
            Transition::Constant(p) => Ok(*p),
        }
    }
}

impl TransitionGen {
    pub fn validate(&self) -> Result<()> {
        match self {
            TransitionGen::WeibullAft { scale, cov, .. } => {
                if !(*scale > 0.0) {
                    return Err(Error::param(format!(
                        "Weibull scale must be > 0, got {scale}"
                    )));
                }
                if !cov.is_zero() {
                    crate::stats::cholesky2(*cov)?;
                }
                Ok(())
            }
            TransitionGen::HazardScaled { base, log_hr } => {
                log_hr.validate()?;
                base.validate()
            }
            TransitionGen::ExponentialFromMean { mean, less } => {
                mean.validate()?;
                less.map_or(Ok(()), |d| d.validate())
            }
            TransitionGen::Fixed { p } => {
                if (0.0..=1.0).contains(p) {
                    Ok(())
                } else {
                    Err(Error::param(format!(
                        "fixed probability must be in [0, 1], got {p}"
                    )))
                }
            }
        }
    }

    /// Draw the uncertain parameters, each from a stream keyed by `role`
    /// and its descriptor (see [`keyed_stream`]). Returns the realised
    /// transition and the number of Weibull draws discarded on the way.
    pub fn realize(&self, role: &str, u: f64, root: &RandomStream) -> Result<(Transition, u32)> {
        Ok(match self {
            TransitionGen::WeibullAft {
                intercept,
                scale,
                cov,
            } => {
                let mut rng = keyed_stream(root, role, self);
                let d = draw_weibull_params(*intercept, *scale, *cov, &mut rng)?;
                (
                    Transition::Weibull {
                        lambda: d.lambda,
                        gamma: d.gamma,
                    },
                    d.rejections,
                )
            }
            TransitionGen::HazardScaled { base, log_hr } => {
                let (b, rej) = base.realize(role, u, root)?;
                let hr_role = format!("{role}/log_hr");
                (
                    Transition::Scaled {
                        base: Box::new(b),
                        log_hr: log_hr.sample(&mut keyed_stream(root, &hr_role, log_hr)),
                    },
                    rej,
                )
            }
            TransitionGen::ExponentialFromMean { mean, less } => {
                let total = mean.sample(&mut keyed_stream(root, &format!("{role}/mean"), mean));
                let m = match less {
                    Some(l) => pd_death_mean(
                        total,
                        l.sample(&mut keyed_stream(root, &format!("{role}/less"), l)),
                    )?,
                    None => total,
                };
                (Transition::Constant(exp_tp_from_mean(m, u)?), 0)
            }
            TransitionGen::Fixed { p } => (Transition::Constant(*p), 0),
        })
    }
}

/// Stream for one uncertain input within a PSA draw, keyed by what the
/// input is (`role`) and its descriptor. Inputs described identically
/// share a draw: a hazard-scaled arm sees the very baseline draw it
/// scales, and two arms specified alike give identical results.
pub fn keyed_stream(root: &RandomStream, role: &str, descriptor: &impl Serialize) -> RandomStream {
    let mut h = Sha256::new();
    h.update(role.as_bytes());
    h.update([0u8]);
    h.update(serde_json::to_vec(descriptor).expect("descriptor serialises"));
    let digest = h.finalize();
    root.substream(u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")))
}

/// Transition generators of one intervention. The two-state model uses
/// only `std_death`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transitions {
    pub std_death: TransitionGen,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_pd: Option<TransitionGen>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pd_death: Option<TransitionGen>,
}

/// Follow-up and terminal-care costs scaled by `numerator / denominator`
/// (costs for one arm borrowed from another).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRatio {
    pub numerator: Dist,
    pub denominator: Dist,
}

fn default_division() -> f64 {
    0.75
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub label: String,
    pub transitions: Transitions,
    /// GBP per cycle on drug.
    pub drug_cost_per_cycle: f64,
    /// Cycles of drug given; without it the drug is taken for as long as
    /// the patient is in stable disease.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_cycles: Option<Dist>,
    /// One-off GBP per death (two-state) or split between progression and
    /// death by `division_factor` (three-state).
    pub follow_up_cost: Dist,
    /// One-off GBP per death.
    pub terminal_care_cost: Dist,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_ratio: Option<CostRatio>,
    /// Share of follow-up cost charged on death rather than progression.
    #[serde(default = "default_division")]
    pub division_factor: f64,
}

/// Utility distributions shared by every intervention.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    /// Progressed disease; stable disease in the two-state model.
    pub progressed: Dist,
    pub surviving: Dist,
    pub other_causes: Dist,
}

impl Default for UtilitySpec {
    fn default() -> Self {
        UtilitySpec {
            progressed: Dist::Beta {
                alpha: 21.1,
                beta: 18.1,
            },
            surviving: Dist::Beta {
                alpha: 581.3,
                beta: 173.6,
            },
            other_causes: Dist::Beta {
                alpha: 29.1,
                beta: 22.5,
            },
        }
    }
}

fn default_cycles() -> usize {
    180
}
fn default_cycle_length() -> f64 {
    1.0
}
fn default_cohort() -> f64 {
    10_000.0
}
fn default_rate() -> f64 {
    0.035
}
fn default_start() -> usize {
    13
}

/// A Markov cohort model and the interventions it compares. Cycle length
/// is in months.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    #[serde(default = "default_cycles")]
    pub cycles: usize,
    #[serde(default = "default_cycle_length")]
    pub cycle_length: f64,
    #[serde(default = "default_cohort")]
    pub cohort_size: f64,
    #[serde(default = "default_rate")]
    pub annual_discount_rate: f64,
    #[serde(default = "default_start")]
    pub discount_start_cycle: usize,
    #[serde(default)]
    pub utilities: UtilitySpec,
    pub interventions: Vec<InterventionSpec>,
}

impl ModelSpec {
    /// Defaults for everything but the interventions: 180 monthly cycles,
    /// a cohort of 10,000, 3.5% a year from cycle 13.
    pub fn new(variant: Variant, interventions: Vec<InterventionSpec>) -> Self {
        ModelSpec {
            variant,
            cycles: default_cycles(),
            cycle_length: default_cycle_length(),
            cohort_size: default_cohort(),
            annual_discount_rate: default_rate(),
            discount_start_cycle: default_start(),
            utilities: UtilitySpec::default(),
            interventions,
        }
    }

    pub fn discounting(&self) -> Discounting {
        Discounting {
            annual_rate: self.annual_discount_rate,
            start_cycle: self.discount_start_cycle,
            cycles_per_year: (12.0 / self.cycle_length).round().max(1.0) as usize,
        }
    }

    pub fn intervention(&self, label: &str) -> Option<&InterventionSpec> {
        self.interventions.iter().find(|i| i.label == label)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cycles == 0 || !(self.cycle_length > 0.0) || !(self.cohort_size > 0.0) {
            return Err(Error::param(
                "cycles, cycle_length and cohort_size must be positive",
            ));
        }
        if !(self.annual_discount_rate >= 0.0) || self.discount_start_cycle == 0 {
            return Err(Error::param(
                "discount rate must be >= 0 and start cycle >= 1",
            ));
        }
        for d in [
            self.utilities.progressed,
            self.utilities.surviving,
            self.utilities.other_causes,
        ] {
            d.validate()?;
        }
        if self.interventions.is_empty() {
            return Err(Error::param("model has no interventions"));
        }
        for (k, i) in self.interventions.iter().enumerate() {
            if self.interventions[..k].iter().any(|o| o.label == i.label) {
                return Err(Error::param(format!(
                    "duplicate intervention `{}`",
                    i.label
                )));
            }
            let ctx = |e: Error| Error::param(format!("{}: {e}", i.label));
            let t = &i.transitions;
            t.std_death.validate().map_err(ctx)?;
            match (self.variant, &t.std_pd, &t.pd_death) {
                (Variant::TwoState, None, None) => {}
                (Variant::TwoState, _, _) => {
                    return Err(ctx(Error::param("two-state model takes only std_death")));
                }
                (Variant::ThreeState, Some(a), Some(b)) => {
                    a.validate().map_err(ctx)?;
                    b.validate().map_err(ctx)?;
                }
                (Variant::ThreeState, _, _) => {
                    return Err(ctx(Error::param(
                        "three-state model needs std_pd and pd_death",
                    )));
                }
            }
            if !(i.drug_cost_per_cycle >= 0.0) {
                return Err(ctx(Error::param("drug cost must be >= 0")));
            }
            if !(0.0..=1.0).contains(&i.division_factor) {
                return Err(ctx(Error::param("division factor must be in [0, 1]")));
            }
            let mut dists = vec![i.follow_up_cost, i.terminal_care_cost];
            dists.extend(i.mean_cycles);
            if let Some(r) = i.cost_ratio {
                dists.extend([r.numerator, r.denominator]);
            }
            for d in dists {
                d.validate().map_err(ctx)?;
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text).map_err(|e| Error::Json {
            path: "<string>".into(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: ModelSpec = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model spec serialises")
    }
}
