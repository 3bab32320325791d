use std::path::Path;

use serde::{Deserialize, Serialize};

use super::icer::{net_benefit, table_icer, table_net_benefit, Icer, NetBenefit};
use super::table::SampleTable;
use crate::error::{Error, Result};
use crate::markov::PsaSample;
use crate::survival::write_rows;

/// `lo, lo + step, ..., hi` (inclusive when `hi - lo` is a whole number of
/// steps).
///
/// ```
/// let g = evsyn::econ::threshold_grid(0.0, 100_000.0, 500.0)?;
/// assert_eq!(g.len(), 201);
/// assert_eq!(g[200], 100_000.0);
/// # Ok::<(), evsyn::Error>(())
/// ```
pub fn threshold_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(lo >= 0.0 && hi >= lo && step > 0.0 && hi.is_finite()) {
        return Err(Error::param(format!("bad threshold grid {lo}:{hi}:{step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| lo + i as f64 * step).collect())
}

/// Cost-effectiveness acceptability: `probability[t][k]` is the share of
/// draws in which intervention `k` has the highest net benefit at
/// `thresholds[t]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ceac {
    pub interventions: Vec<String>,
    pub thresholds: Vec<f64>,
    pub probability: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CeacRow {
    pub threshold: f64,
    pub intervention: String,
    pub probability: f64,
}

impl Ceac {
    pub fn rows(&self) -> Vec<CeacRow> {
        let mut out = Vec::with_capacity(self.thresholds.len() * self.interventions.len());
        for (t, p) in self.thresholds.iter().zip(&self.probability) {
            for (label, &pk) in self.interventions.iter().zip(p) {
                out.push(CeacRow {
                    threshold: *t,
                    intervention: label.clone(),
                    probability: pk,
                });
            }
        }
        out
    }

    /// `threshold,intervention,probability`
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_rows(path, &self.rows())
    }
}

/// Draws where several interventions tie exactly on net benefit credit
/// each of them equally, so every threshold's probabilities sum to one.
pub fn ceac(samples: &[PsaSample], thresholds: &[f64]) -> Result<Ceac> {
    table_ceac(&SampleTable::new(samples)?, thresholds)
}

pub(crate) fn table_ceac(t: &SampleTable, thresholds: &[f64]) -> Result<Ceac> {
    if thresholds.is_empty() {
        return Err(Error::param("CEAC needs at least one threshold"));
    }
    if let Some(w) = thresholds.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(Error::param(format!(
            "threshold must be finite and >= 0, got {w}"
        )));
    }
    let k = t.interventions.len();
    if k < 2 {
        return Err(Error::InsufficientData(
            "CEAC needs at least two interventions".into(),
        ));
    }
    let n = t.draws.len() as f64;
    let probability = thresholds
        .iter()
        .map(|&w| {
            let mut wins = vec![0.0; k];
            let mut nb = vec![0.0; k];
            for (c, q) in t.cost.iter().zip(&t.qaly) {
                for j in 0..k {
                    nb[j] = net_benefit(c[j], q[j], w);
                }
                let best = nb.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let tied = nb.iter().filter(|&&x| x == best).count() as f64;
                for j in 0..k {
                    if nb[j] == best {
                        wins[j] += 1.0 / tied;
                    }
                }
            }
            wins.into_iter().map(|x| x / n).collect()
        })
        .collect();
    Ok(Ceac {
        interventions: t.interventions.clone(),
        thresholds: thresholds.to_vec(),
        probability,
    })
}

/// One draw's increment of `new` over `comparator`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanePoint {
    pub draw: usize,
    pub d_qaly: f64,
    pub d_cost: f64,
}

/// Per-draw `(ΔQALY, Δcost)` of `new` over `comparator`, in draw order.
pub fn ce_plane(samples: &[PsaSample], new: &str, comparator: &str) -> Result<Vec<PlanePoint>> {
    let t = SampleTable::new(samples)?;
    Ok(table_plane(&t, t.index(new)?, t.index(comparator)?))
}

pub(crate) fn table_plane(t: &SampleTable, a: usize, b: usize) -> Vec<PlanePoint> {
    t.draws
        .iter()
        .enumerate()
        .map(|(i, &draw)| PlanePoint {
            draw,
            d_qaly: t.qaly[i][a] - t.qaly[i][b],
            d_cost: t.cost[i][a] - t.cost[i][b],
        })
        .collect()
}

/// `draw,d_qaly,d_cost`
pub fn write_plane(path: &Path, points: &[PlanePoint]) -> Result<()> {
    write_rows(path, points)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InterventionOutcome {
    pub label: String,
    pub mean_cost: f64,
    pub mean_qaly: f64,
    pub net_benefit: Vec<NetBenefit>,
    /// Probability of being the most cost-effective at each reporting
    /// threshold, in the order of `net_benefit`.
    pub probability: Vec<f64>,
}

/// Everything decision-relevant about a PSA at a few reporting thresholds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CeResult {
    pub draws: usize,
    pub thresholds: Vec<f64>,
    pub interventions: Vec<InterventionOutcome>,
    /// Each later intervention against each earlier one.
    pub increments: Vec<Icer>,
}

impl CeResult {
    pub fn new(samples: &[PsaSample], thresholds: &[f64]) -> Result<Self> {
        let t = SampleTable::new(samples)?;
        let curve = table_ceac(&t, thresholds)?;
        let k = t.interventions.len();
        let mut interventions = Vec::with_capacity(k);
        for j in 0..k {
            interventions.push(InterventionOutcome {
                label: t.interventions[j].clone(),
                mean_cost: t.mean_cost(j),
                mean_qaly: t.mean_qaly(j),
                net_benefit: thresholds
                    .iter()
                    .map(|&w| table_net_benefit(&t, j, w))
                    .collect::<Result<_>>()?,
                probability: curve.probability.iter().map(|p| p[j]).collect(),
            });
        }
        let mut increments = vec![];
        for a in 0..k {
            for b in a + 1..k {
                increments.push(table_icer(&t, b, a));
            }
        }
        Ok(CeResult {
            draws: t.draws.len(),
            thresholds: thresholds.to_vec(),
            interventions,
            increments,
        })
    }

    pub fn intervention(&self, label: &str) -> Option<&InterventionOutcome> {
        self.interventions.iter().find(|i| i.label == label)
    }

    /// Label with the highest mean net benefit at `thresholds[i]`.
    pub fn best_at(&self, i: usize) -> &str {
        let best = self
            .interventions
            .iter()
            .max_by(|a, b| {
                a.net_benefit[i]
                    .summary
                    .mean
                    .total_cmp(&b.net_benefit[i].summary.mean)
            })
            .expect("at least two interventions");
        &best.label
    }
}
