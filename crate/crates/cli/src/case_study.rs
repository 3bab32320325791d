//! The bundled docetaxel case study: D+P, M+P and P in metastatic
//! hormone-refractory prostate cancer.
//!
//! The trial figures are not redistributable, so the curves here are
//! synthetic. Each arm is a Weibull whose median (or mean) matches the
//! published arm and whose hazard ratio to its control matches the
//! reconstructed estimate; patients sit at evenly spaced quantiles with
//! uniform staggered entry, which makes the fixture exactly reproducible.

use std::path::{Path, PathBuf};

use evsyn::markov::{CostRatio, InterventionSpec, ModelSpec, TransitionGen, Transitions, Variant};
use evsyn::mcmc::ChainConfig;
use evsyn::stats::{Dist, Sym2};
use evsyn::survival::{km_fit, write_km_curve, IpdRecord};
use evsyn::synthesis::{write_studies, Outcome, StudyOutcome};
use evsyn::{Error, Result};
use statrs::function::gamma::gamma;

use crate::config::{
    ArmCurve, BrmaPriors, CurveSet, Edge, Estimate, Grid, IndirectSpec, Link, PipelineConfig,
    PlaneSpec, Slot, Source, Target,
};

/// How an arm's survival is pinned down.
#[derive(Clone, Copy, Debug)]
pub enum Scale {
    Median(f64),
    Mean(f64),
}

#[derive(Clone, Debug)]
pub struct SyntheticArm {
    pub arm: &'static str,
    pub n: usize,
    pub shape: f64,
    pub scale: Scale,
    /// Hazard ratio applied on top of `scale`.
    pub hr: f64,
}

impl SyntheticArm {
    /// Weibull PH rate `λ` in `S(t) = exp(-λ t^γ)`, before `hr`.
    pub fn lambda(&self) -> f64 {
        match self.scale {
            Scale::Median(m) => std::f64::consts::LN_2 / m.powf(self.shape),
            Scale::Mean(mu) => (gamma(1.0 + 1.0 / self.shape) / mu).powf(self.shape),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticFigure {
    pub study: &'static str,
    pub outcome: Outcome,
    /// `(treatment, comparator)` when the figure is used for a Cox fit.
    pub contrast: Option<(&'static str, &'static str)>,
    pub arms: Vec<SyntheticArm>,
    /// Months from first entry to data cut-off.
    pub follow_up: f64,
    pub accrual: f64,
    /// Spacing of the risk table.
    pub risk_every: f64,
}

impl SyntheticFigure {
    fn file_stem(&self, arm: &str) -> String {
        let clean = |s: &str| {
            s.chars()
                .filter_map(|c| match c {
                    'a'..='z' | '0'..='9' => Some(c),
                    'A'..='Z' => Some(c.to_ascii_lowercase()),
                    _ => None,
                })
                .collect::<String>()
        };
        format!(
            "{}_{}_{}",
            clean(self.study),
            clean(&self.outcome.to_string()),
            clean(arm)
        )
    }
}

/// Patients at survival quantiles `(i + 0.5) / n`, censored administratively
/// under uniform entry. Entry order is a golden-ratio sequence so that
/// censoring does not line up with event order.
pub fn synthetic_ipd(fig: &SyntheticFigure, arm: &SyntheticArm) -> Vec<IpdRecord> {
    let rate = arm.lambda() * arm.hr;
    (0..arm.n)
        .map(|i| {
            let u = (i as f64 + 0.5) / arm.n as f64;
            let t = (-u.ln() / rate).powf(1.0 / arm.shape);
            let entry = (i as f64 * 0.618_033_988_749_895 + 0.5).fract() * fig.accrual;
            let c = fig.follow_up - entry;
            if t <= c {
                IpdRecord::new(t, true, arm.arm)
            } else {
                IpdRecord::new(c, false, arm.arm)
            }
        })
        .collect()
}

/// Published arm sizes, medians and reconstructed hazard ratios.
pub fn figures() -> Vec<SyntheticFigure> {
    let arm = |arm, n, shape, scale, hr| SyntheticArm {
        arm,
        n,
        shape,
        scale,
        hr,
    };
    let os = |study, n_t, n_c, median, hr| SyntheticFigure {
        study,
        outcome: Outcome::Os,
        contrast: Some(("M+P", "P")),
        arms: vec![
            arm("M+P", n_t, 1.3, Scale::Median(median), hr),
            arm("P", n_c, 1.3, Scale::Median(median), 1.0),
        ],
        follow_up: 42.0,
        accrual: 24.0,
        risk_every: 6.0,
    };
    let pfs = |study, n_t, n_c, median, hr| SyntheticFigure {
        study,
        outcome: Outcome::Pfs,
        contrast: Some(("M+P", "P")),
        arms: vec![
            arm("M+P", n_t, 1.2, Scale::Median(median), hr),
            arm("P", n_c, 1.2, Scale::Median(median), 1.0),
        ],
        follow_up: 30.0,
        accrual: 24.0,
        risk_every: 3.0,
    };
    vec![
        SyntheticFigure {
            study: "TAX327",
            outcome: Outcome::Os,
            contrast: Some(("D+P", "M+P")),
            arms: vec![
                arm("D+P", 335, 1.5, Scale::Median(16.5), 0.76),
                arm("M+P", 337, 1.5, Scale::Median(16.5), 1.0),
            ],
            follow_up: 48.0,
            accrual: 24.0,
            risk_every: 6.0,
        },
        os("CALGB9182", 121, 121, 12.6, 0.96),
        os("CCI-NOV22", 80, 81, 10.8, 0.81),
        os("Berry", 60, 60, 19.0, 0.95),
        pfs("CALGB9182", 121, 121, 2.3, 0.74),
        pfs("Berry", 60, 60, 4.1, 0.63),
        SyntheticFigure {
            study: "SWOG",
            outcome: Outcome::Pfs,
            contrast: None,
            arms: vec![arm("M+P", 337, 1.3, Scale::Mean(5.9), 1.0)],
            follow_up: 36.0,
            accrual: 24.0,
            risk_every: 3.0,
        },
    ]
}

/// Rows with no usable figure.
pub fn summary_rows() -> Result<Vec<StudyOutcome>> {
    Ok(vec![StudyOutcome::from_hr_ci(
        "CCI-NOV22",
        "M+P",
        "P",
        Outcome::Pfs,
        0.47,
        0.32,
        0.68,
    )?])
}

fn placeholder_weibull() -> TransitionGen {
    TransitionGen::WeibullAft {
        intercept: 3.0,
        scale: 0.7,
        cov: Sym2 {
            a: 1e-4,
            b: 0.0,
            c: 1e-4,
        },
    }
}

fn scaled() -> Result<TransitionGen> {
    Ok(TransitionGen::HazardScaled {
        base: Box::new(placeholder_weibull()),
        log_hr: Dist::point(0.0)?,
    })
}

fn from_mean() -> Result<TransitionGen> {
    Ok(TransitionGen::ExponentialFromMean {
        mean: Dist::point(12.0)?,
        less: None,
    })
}

struct Costs {
    drug: f64,
    mean_cycles: Option<Dist>,
    follow_up: Dist,
    terminal: Dist,
    ratio: Option<CostRatio>,
}

fn costs() -> Result<[(&'static str, Costs); 3]> {
    let mp_fu = Dist::gamma_mean_sd(5424.0, 2200.0)?;
    let mp_tc = Dist::gamma_mean_sd(3756.0, 1840.0)?;
    Ok([
        (
            "M+P",
            Costs {
                drug: 347.73,
                mean_cycles: Some(Dist::normal(5.9, 0.17)?),
                follow_up: mp_fu,
                terminal: mp_tc,
                ratio: None,
            },
        ),
        (
            "D+P",
            Costs {
                drug: 1253.92,
                mean_cycles: Some(Dist::normal(7.3, 0.18)?),
                follow_up: Dist::gamma_mean_sd(3384.0, 1400.0)?,
                terminal: Dist::gamma_mean_sd(3326.0, 1630.0)?,
                ratio: None,
            },
        ),
        (
            "P",
            Costs {
                drug: 1.48,
                mean_cycles: None,
                follow_up: mp_fu,
                terminal: mp_tc,
                // shape and scale: the ratio is 1.278 (0.946, 1.691)
                ratio: Some(CostRatio {
                    numerator: Dist::gamma(105.0, 1.0 / 276.0)?,
                    denominator: Dist::gamma(81.0, 1.0 / 285.0)?,
                }),
            },
        ),
    ])
}

fn model(variant: Variant) -> Result<ModelSpec> {
    let mut ivs = vec![];
    for (label, c) in costs()? {
        let transitions = match variant {
            Variant::TwoState => Transitions {
                std_death: if label == "P" {
                    scaled()?
                } else {
                    placeholder_weibull()
                },
                std_pd: None,
                pd_death: None,
            },
            Variant::ThreeState => Transitions {
                std_death: TransitionGen::Fixed { p: 0.005 },
                std_pd: Some(if label == "M+P" {
                    placeholder_weibull()
                } else {
                    scaled()?
                }),
                pd_death: Some(from_mean()?),
            },
        };
        ivs.push(InterventionSpec {
            label: label.into(),
            transitions,
            drug_cost_per_cycle: c.drug,
            mean_cycles: c.mean_cycles,
            follow_up_cost: c.follow_up,
            terminal_care_cost: c.terminal,
            cost_ratio: c.ratio,
            division_factor: 0.75,
        });
    }
    Ok(ModelSpec::new(variant, ivs))
}

fn links() -> Result<Vec<Link>> {
    use Edge::*;
    use Variant::*;
    let arm = |study: &str, outcome, arm: &str| Source::Arm {
        study: study.into(),
        outcome,
        arm: arm.into(),
    };
    let effect = |outcome, t: &str, c: &str, estimate| Source::Effect {
        outcome,
        treatment: t.into(),
        comparator: c.into(),
        estimate,
    };
    let pooled = |outcome, a: &str| Source::PooledArm {
        outcome,
        arm: a.into(),
    };
    let link = |model, iv: &str, edge, slot, source| Link {
        model,
        intervention: iv.into(),
        edge,
        slot,
        source,
    };
    let tax_mp = arm("TAX327", Outcome::Os, "M+P");
    let tax_dp = arm("TAX327", Outcome::Os, "D+P");
    let swog = arm("SWOG", Outcome::Pfs, "M+P");
    Ok(vec![
        link(TwoState, "M+P", StdDeath, Slot::Weibull, tax_mp.clone()),
        link(TwoState, "D+P", StdDeath, Slot::Weibull, tax_dp.clone()),
        link(TwoState, "P", StdDeath, Slot::Weibull, tax_mp.clone()),
        link(
            TwoState,
            "P",
            StdDeath,
            Slot::LogHr,
            effect(Outcome::Os, "P", "M+P", Estimate::Fixed),
        ),
        link(ThreeState, "M+P", StdPd, Slot::Weibull, swog.clone()),
        link(ThreeState, "D+P", StdPd, Slot::Weibull, swog.clone()),
        link(
            ThreeState,
            "D+P",
            StdPd,
            Slot::LogHr,
            effect(Outcome::Pfs, "D+P", "M+P", Estimate::Predicted),
        ),
        link(ThreeState, "P", StdPd, Slot::Weibull, swog),
        link(
            ThreeState,
            "P",
            StdPd,
            Slot::LogHr,
            effect(Outcome::Pfs, "P", "M+P", Estimate::Fixed),
        ),
        link(ThreeState, "M+P", PdDeath, Slot::Mean, tax_mp),
        link(ThreeState, "D+P", PdDeath, Slot::Mean, tax_dp),
        link(
            ThreeState,
            "P",
            PdDeath,
            Slot::Mean,
            pooled(Outcome::Os, "P"),
        ),
        link(
            ThreeState,
            "P",
            PdDeath,
            Slot::Less,
            pooled(Outcome::Pfs, "P"),
        ),
    ])
}

/// The pipeline configuration, with the fixture paths relative to its
/// directory. Mean time to progression for M+P and D+P is their mean
/// number of chemotherapy cycles, so `less` reuses the drug-cycle input.
pub fn config(seed: u64) -> Result<PipelineConfig> {
    let mut curves = vec![];
    for fig in figures() {
        curves.push(CurveSet {
            study: fig.study.into(),
            outcome: fig.outcome,
            treatment: fig.contrast.map(|c| c.0.into()),
            comparator: fig.contrast.map(|c| c.1.into()),
            arms: fig
                .arms
                .iter()
                .map(|a| {
                    let stem = fig.file_stem(a.arm);
                    ArmCurve {
                        arm: a.arm.into(),
                        steps: PathBuf::from(format!("curves/{stem}_steps.csv")),
                        risk: PathBuf::from(format!("curves/{stem}_risk.csv")),
                        events: Some(synthetic_ipd(&fig, a).iter().filter(|r| r.event).count()),
                    }
                })
                .collect(),
        });
    }
    let mut three = model(Variant::ThreeState)?;
    for iv in &mut three.interventions {
        if let (Some(TransitionGen::ExponentialFromMean { less, .. }), Some(m)) =
            (iv.transitions.pd_death.as_mut(), iv.mean_cycles)
        {
            *less = Some(m);
        }
    }
    Ok(PipelineConfig {
        seed,
        chain: ChainConfig::new(30_000, 15_000, seed).chains(3),
        draws: 5000,
        workers: None,
        thresholds: vec![20_000.0, 30_000.0],
        ceac: Grid {
            lo: 0.0,
            hi: 100_000.0,
            step: 500.0,
        },
        curves,
        summaries: Some(PathBuf::from("summaries.csv")),
        predict: vec![Target {
            study: "TAX327".into(),
            outcome: Outcome::Pfs,
        }],
        // three PFS studies cannot pin down the vague defaults
        brma: BrmaPriors {
            tau_sd: 0.5,
            logvar_sd: 0.5,
        },
        indirect: vec![
            IndirectSpec {
                outcome: Outcome::Os,
                treatment: "D+P".into(),
                via: "M+P".into(),
                comparator: "P".into(),
            },
            IndirectSpec {
                outcome: Outcome::Pfs,
                treatment: "D+P".into(),
                via: "M+P".into(),
                comparator: "P".into(),
            },
        ],
        two_state: model(Variant::TwoState)?,
        three_state: three,
        links: links()?,
        plane: PlaneSpec {
            new: "D+P".into(),
            comparator: "M+P".into(),
        },
        base: PathBuf::new(),
    })
}

/// Write the fixture and `config.json` into `dir`; returns the config path.
pub fn write_case_study(dir: &Path, seed: u64) -> Result<PathBuf> {
    let curves = dir.join("curves");
    std::fs::create_dir_all(&curves).map_err(|e| Error::io(&curves, e))?;
    for fig in figures() {
        let grid: Vec<f64> = (0..)
            .map(|k| k as f64 * fig.risk_every)
            .take_while(|&t| t < fig.follow_up)
            .collect();
        for a in &fig.arms {
            let fit = km_fit(&synthetic_ipd(&fig, a))?;
            let stem = fig.file_stem(a.arm);
            write_km_curve(
                &curves.join(format!("{stem}_steps.csv")),
                &curves.join(format!("{stem}_risk.csv")),
                &fit.curve(&grid),
            )?;
        }
    }
    write_studies(&dir.join("summaries.csv"), &summary_rows()?)?;
    let cfg = config(seed)?;
    let path = dir.join("config.json");
    let mut text = cfg.to_json();
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
