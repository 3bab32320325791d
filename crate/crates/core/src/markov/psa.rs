use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cohort::{accrue_costs, run_cohort, CostBreakdown, ParameterDraw, UtilityDraw};
use super::spec::ModelSpec;
use crate::error::{Error, Result};
use crate::stats::RandomStream;
use crate::survival::{read_rows, write_rows};

/// One intervention's per-patient discounted outcome in one PSA draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsaSample {
    pub draw: usize,
    pub intervention: String,
    pub cost: f64,
    pub qaly: f64,
}

/// Per-patient detail kept alongside each sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PsaDetail {
    pub costs: CostBreakdown,
    pub time_stable: f64,
    pub time_progressed: f64,
    pub time_alive: f64,
}

#[derive(Clone, Debug)]
pub struct PsaResult {
    pub interventions: Vec<String>,
    /// Draw-major: all interventions of draw 0, then draw 1, ...
    pub samples: Vec<PsaSample>,
    pub details: Vec<PsaDetail>,
    pub weibull_rejections: u64,
    pub warnings: Vec<String>,
}

impl PsaResult {
    pub fn draws(&self) -> usize {
        self.samples.len() / self.interventions.len()
    }

    pub fn for_intervention(&self, label: &str) -> impl Iterator<Item = &PsaSample> + '_ {
        let label = label.to_string();
        self.samples.iter().filter(move |s| s.intervention == label)
    }

    pub fn mean_cost(&self, label: &str) -> f64 {
        crate::stats::mean(
            &self
                .for_intervention(label)
                .map(|s| s.cost)
                .collect::<Vec<_>>(),
        )
    }

    pub fn mean_qaly(&self, label: &str) -> f64 {
        crate::stats::mean(
            &self
                .for_intervention(label)
                .map(|s| s.qaly)
                .collect::<Vec<_>>(),
        )
    }
}

/// Random stream id reserved for PSA draws; draw `d` uses its substream `d`.
const PSA_STREAM: u64 = 0x5053_4100;

type DrawOut = (Vec<PsaSample>, Vec<PsaDetail>, u64);

fn one_draw(spec: &ModelSpec, seed: u64, d: usize) -> Result<DrawOut> {
    let root = RandomStream::new(seed, PSA_STREAM).substream(d as u64);
    let utilities = UtilityDraw::sample(&spec.utilities, &mut root.substream(0));
    let mut samples = Vec::with_capacity(spec.interventions.len());
    let mut details = Vec::with_capacity(spec.interventions.len());
    let mut rejections = 0u64;
    for iv in &spec.interventions {
        let draw = ParameterDraw::sample(spec, iv, &root)
            .map_err(|e| Error::input(format!("{}: {e}", iv.label)))?;
        rejections += draw.rejections as u64;
        let trace = run_cohort(spec, &draw, &utilities)
            .map_err(|e| Error::input(format!("{}: {e}", iv.label)))?;
        let costs = accrue_costs(&trace, &draw);
        let n = spec.cohort_size;
        samples.push(PsaSample {
            draw: d,
            intervention: iv.label.clone(),
            cost: costs.total() / n,
            qaly: trace.qaly_per_patient(),
        });
        details.push(PsaDetail {
            costs: CostBreakdown {
                drug: costs.drug / n,
                follow_up_stable: costs.follow_up_stable / n,
                follow_up_progressed: costs.follow_up_progressed / n,
                terminal_care: costs.terminal_care / n,
            },
            time_stable: trace.time_stable(),
            time_progressed: trace.time_progressed(),
            time_alive: trace.time_alive(),
        });
    }
    Ok((samples, details, rejections))
}

/// Probabilistic sensitivity analysis: `draws` independent parameter draws,
/// each run through every intervention with one shared utility draw.
///
/// Draw `d` takes its randomness from its own stream of `seed`, and results
/// are collected in draw order, so the output depends only on `(spec,
/// draws, seed)` and not on `workers` (`None` uses rayon's global pool).
/// Failed draws are collected and reported together.
pub fn run_psa(
    spec: &ModelSpec,
    draws: usize,
    seed: u64,
    workers: Option<usize>,
) -> Result<PsaResult> {
    spec.validate()?;
    if draws == 0 {
        return Err(Error::param("PSA needs at least one draw"));
    }
    let work = || -> Vec<Result<DrawOut>> {
        (0..draws)
            .into_par_iter()
            .map(|d| one_draw(spec, seed, d))
            .collect()
    };
    let results = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::param(format!("cannot start {w} workers: {e}")))?
            .install(work),
        None => work(),
    };

    let mut samples = Vec::with_capacity(draws * spec.interventions.len());
    let mut details = Vec::with_capacity(draws * spec.interventions.len());
    let mut rejections = 0;
    let mut failures = vec![];
    for (d, r) in results.into_iter().enumerate() {
        match r {
            Ok((s, det, rej)) => {
                samples.extend(s);
                details.extend(det);
                rejections += rej;
            }
            Err(e) => failures.push(format!("draw {d}: {e}")),
        }
    }
    if !failures.is_empty() {
        return Err(Error::PsaDraws {
            count: failures.len(),
            detail: failures.into_iter().take(5).collect::<Vec<_>>().join("; "),
        });
    }
    let mut warnings = vec![];
    let weibull_draws = (draws * spec.interventions.len()) as f64;
    if rejections as f64 > 0.01 * weibull_draws {
        warnings.push(format!(
            "{rejections} Weibull draws rejected for a non-positive scale ({:.1}% of parameter draws)",
            100.0 * rejections as f64 / weibull_draws
        ));
    }
    Ok(PsaResult {
        interventions: spec.interventions.iter().map(|i| i.label.clone()).collect(),
        samples,
        details,
        weibull_rejections: rejections,
        warnings,
    })
}

/// `draw,intervention,cost,qaly`
pub fn write_psa(path: &Path, samples: &[PsaSample]) -> Result<()> {
    write_rows(path, samples)
}

pub fn read_psa(path: &Path) -> Result<Vec<PsaSample>> {
    read_rows(path)
}
