use std::fmt;

use serde::Serialize;

use super::table::SampleTable;
use crate::error::{Error, Result};
use crate::markov::PsaSample;
use crate::stats::{summarize, DrawSummary};

/// Smallest |ΔQALY| for which a ratio is reported.
pub const QALY_EPS: f64 = 1e-12;

/// Where `(ΔQALY, Δcost)` falls on the cost-effectiveness plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrant {
    /// More effective and more costly: the ratio is a price per QALY.
    NorthEast,
    /// More effective and no more costly.
    Dominant,
    /// Less effective and no less costly.
    Dominated,
    /// Less effective and cheaper: the ratio is a saving per QALY lost.
    SouthWest,
    /// No QALY difference; no ratio.
    Undefined,
}

/// Incremental comparison of `new` against `comparator` from the means of
/// the draws.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Icer {
    pub new: String,
    pub comparator: String,
    pub d_cost: f64,
    pub d_qaly: f64,
    /// `d_cost / d_qaly`; `None` when the QALY difference is negligible.
    pub value: Option<f64>,
    pub quadrant: Quadrant,
}

impl Icer {
    pub fn from_increments(new: &str, comparator: &str, d_cost: f64, d_qaly: f64) -> Self {
        let quadrant = if d_qaly.abs() < QALY_EPS {
            Quadrant::Undefined
        } else if d_qaly > 0.0 {
            if d_cost > 0.0 {
                Quadrant::NorthEast
            } else {
                Quadrant::Dominant
            }
        } else if d_cost >= 0.0 {
            Quadrant::Dominated
        } else {
            Quadrant::SouthWest
        };
        Icer {
            new: new.into(),
            comparator: comparator.into(),
            d_cost,
            d_qaly,
            value: (quadrant != Quadrant::Undefined).then(|| d_cost / d_qaly),
            quadrant,
        }
    }
}

impl fmt::Display for Icer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} vs {}: ", self.new, self.comparator)?;
        match (self.quadrant, self.value) {
            (Quadrant::NorthEast, Some(v)) => write!(f, "{v:.0} GBP/QALY"),
            (Quadrant::SouthWest, Some(v)) => write!(f, "{v:.0} GBP saved per QALY lost"),
            (Quadrant::Dominant, _) => write!(f, "dominant"),
            (Quadrant::Dominated, _) => write!(f, "dominated"),
            _ => write!(f, "undefined (no QALY difference)"),
        }
    }
}

/// ICER of `new` against `comparator`: difference of mean costs over
/// difference of mean QALYs.
///
/// ```
/// use evsyn::econ::{Icer, Quadrant};
///
/// let i = Icer::from_increments("D+P", "M+P", 4624.0, 0.154);
/// assert_eq!(i.quadrant, Quadrant::NorthEast);
/// assert_eq!(i.value.unwrap().round(), 30026.0);
/// ```
pub fn icer(samples: &[PsaSample], new: &str, comparator: &str) -> Result<Icer> {
    let t = SampleTable::new(samples)?;
    Ok(table_icer(&t, t.index(new)?, t.index(comparator)?))
}

pub(crate) fn table_icer(t: &SampleTable, new: usize, comparator: usize) -> Icer {
    Icer::from_increments(
        &t.interventions[new],
        &t.interventions[comparator],
        t.mean_cost(new) - t.mean_cost(comparator),
        t.mean_qaly(new) - t.mean_qaly(comparator),
    )
}

/// Net monetary benefit `threshold · qaly − cost`.
pub fn net_benefit(cost: f64, qaly: f64, threshold: f64) -> f64 {
    threshold * qaly - cost
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NetBenefit {
    pub intervention: String,
    pub threshold: f64,
    /// Over draws: mean and 95% interval.
    pub summary: DrawSummary,
}

/// Per-draw net benefit of `label` at `threshold`, summarised.
pub fn net_benefit_summary(
    samples: &[PsaSample],
    label: &str,
    threshold: f64,
) -> Result<NetBenefit> {
    let t = SampleTable::new(samples)?;
    table_net_benefit(&t, t.index(label)?, threshold)
}

pub(crate) fn table_net_benefit(t: &SampleTable, k: usize, threshold: f64) -> Result<NetBenefit> {
    if !(threshold >= 0.0 && threshold.is_finite()) {
        return Err(Error::param(format!(
            "threshold must be finite and >= 0, got {threshold}"
        )));
    }
    let nb: Vec<f64> = t
        .cost
        .iter()
        .zip(&t.qaly)
        .map(|(c, q)| net_benefit(c[k], q[k], threshold))
        .collect();
    let summary = if nb.len() == 1 {
        DrawSummary {
            mean: nb[0],
            sd: 0.0,
            median: nb[0],
            lower: nb[0],
            upper: nb[0],
            n: 1,
        }
    } else {
        summarize(&nb)?
    };
    Ok(NetBenefit {
        intervention: t.interventions[k].clone(),
        threshold,
        summary,
    })
}
