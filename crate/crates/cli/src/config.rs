use std::path::{Path, PathBuf};

use evsyn::markov::{ModelSpec, Variant};
use evsyn::mcmc::ChainConfig;
use evsyn::synthesis::Outcome;
use evsyn::{Error, Result};
use serde::{Deserialize, Serialize};

/// One arm of a digitised Kaplan-Meier figure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmCurve {
    pub arm: String,
    /// `time,survival`
    pub steps: PathBuf,
    /// `interval_start,n_at_risk`
    pub risk: PathBuf,
    /// Total events, when the publication reports it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<usize>,
}

/// A published figure: one outcome of one study. With `treatment` and
/// `comparator` set, a Cox model of the reconstructed arms gives the
/// study's log HR.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    pub study: String,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub treatment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparator: Option<String>,
    pub arms: Vec<ArmCurve>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub study: String,
    pub outcome: Outcome,
}

/// `treatment` vs `comparator` through their common comparator `via`:
/// the `treatment`/`via` contrast (a single study or a BRMA prediction)
/// composed with the fixed-effect pooled `via`/`comparator` contrast.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndirectSpec {
    pub outcome: Outcome,
    pub treatment: String,
    pub via: String,
    pub comparator: String,
}

/// Which estimate of a contrast to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimate {
    /// The only study of the contrast.
    Study,
    Fixed,
    Random,
    Predicted,
    Indirect,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    StdDeath,
    StdPd,
    PdDeath,
}

/// Where in a transition generator a value goes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    /// The Weibull coefficients (of the baseline, for a hazard-scaled edge).
    Weibull,
    /// `log_hr` of a hazard-scaled edge.
    LogHr,
    /// `mean` of an exponential-from-mean edge.
    Mean,
    /// `less` of an exponential-from-mean edge.
    Less,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Weibull fit or restricted mean of one reconstructed arm.
    Arm {
        study: String,
        outcome: Outcome,
        arm: String,
    },
    Effect {
        outcome: Outcome,
        treatment: String,
        comparator: String,
        estimate: Estimate,
    },
    /// Mean survival from the fixed-effect pooled log event rate of every
    /// reconstructed arm with this label.
    PooledArm { outcome: Outcome, arm: String },
}

/// Fill a slot of a model with a synthesis result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub model: Variant,
    pub intervention: String,
    pub edge: Edge,
    pub slot: Slot,
    pub source: Source,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneSpec {
    pub new: String,
    pub comparator: String,
}

/// Prior scales for the bivariate model; the defaults are vague.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrmaPriors {
    /// Half-normal SD of `tau_os` and `tau_pfs`.
    pub tau_sd: f64,
    /// Half-normal SD of the spread of log within-study variances.
    pub logvar_sd: f64,
}

impl Default for BrmaPriors {
    fn default() -> Self {
        BrmaPriors {
            tau_sd: 1e3f64.sqrt(),
            logvar_sd: 10.0,
        }
    }
}

fn default_draws() -> usize {
    5000
}

fn default_thresholds() -> Vec<f64> {
    vec![20_000.0, 30_000.0]
}

fn default_grid() -> Grid {
    Grid {
        lo: 0.0,
        hi: 100_000.0,
        step: 500.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub chain: ChainConfig,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Thresholds reported in the summary.
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default = "default_grid")]
    pub ceac: Grid,
    pub curves: Vec<CurveSet>,
    /// Extra study rows given as summaries
    /// (`study,treatment,comparator,outcome,log_hr,se`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summaries: Option<PathBuf>,
    #[serde(default)]
    pub predict: Vec<Target>,
    #[serde(default)]
    pub brma: BrmaPriors,
    #[serde(default)]
    pub indirect: Vec<IndirectSpec>,
    pub two_state: ModelSpec,
    pub three_state: ModelSpec,
    #[serde(default)]
    pub links: Vec<Link>,
    pub plane: PlaneSpec,
    /// Directory relative paths are resolved against; the config file's
    /// own directory when loaded from a file.
    #[serde(skip)]
    pub base: PathBuf,
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Every input file, resolved, in config order.
    pub fn inputs(&self) -> Vec<PathBuf> {
        let mut v = vec![];
        for c in &self.curves {
            for a in &c.arms {
                v.push(self.resolve(&a.steps));
                v.push(self.resolve(&a.risk));
            }
        }
        if let Some(s) = &self.summaries {
            v.push(self.resolve(s));
        }
        v
    }

    pub fn model(&self, v: Variant) -> &ModelSpec {
        match v {
            Variant::TwoState => &self.two_state,
            Variant::ThreeState => &self.three_state,
        }
    }

    pub fn model_mut(&mut self, v: Variant) -> &mut ModelSpec {
        match v {
            Variant::TwoState => &mut self.two_state,
            Variant::ThreeState => &mut self.three_state,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        if self.draws == 0 {
            return Err(Error::param("draws must be >= 1"));
        }
        for p in self.inputs() {
            if !p.is_file() {
                return Err(Error::io(
                    &p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
                ));
            }
        }
        for c in &self.curves {
            if c.arms.is_empty() {
                return Err(Error::param(format!("{} {}: no arms", c.study, c.outcome)));
            }
            if c.treatment.is_some() != c.comparator.is_some() {
                return Err(Error::param(format!(
                    "{} {}: give both treatment and comparator or neither",
                    c.study, c.outcome
                )));
            }
            if let (Some(t), Some(r)) = (&c.treatment, &c.comparator) {
                for want in [t, r] {
                    if !c.arms.iter().any(|a| &a.arm == want) {
                        return Err(Error::LabelMismatch(format!(
                            "{} {}: no arm `{want}`",
                            c.study, c.outcome
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
