use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::markov::PsaSample;

/// PSA samples rearranged as `draw × intervention` matrices. Interventions
/// keep the order of their first appearance, draws are sorted by id.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleTable {
    pub interventions: Vec<String>,
    pub draws: Vec<usize>,
    /// `cost[d][k]` for draw index `d`, intervention `k`.
    pub cost: Vec<Vec<f64>>,
    pub qaly: Vec<Vec<f64>>,
}

impl SampleTable {
    pub fn new(samples: &[PsaSample]) -> Result<Self> {
        let mut interventions: Vec<String> = vec![];
        for s in samples {
            if !interventions.contains(&s.intervention) {
                interventions.push(s.intervention.clone());
            }
        }
        let k = interventions.len();
        let mut rows: BTreeMap<usize, Vec<Option<(f64, f64)>>> = BTreeMap::new();
        for s in samples {
            if !(s.cost.is_finite() && s.qaly.is_finite()) {
                return Err(Error::input(format!(
                    "draw {} of {}: non-finite outcome",
                    s.draw, s.intervention
                )));
            }
            let j = interventions
                .iter()
                .position(|l| *l == s.intervention)
                .expect("collected above");
            let row = rows.entry(s.draw).or_insert_with(|| vec![None; k]);
            if row[j].replace((s.cost, s.qaly)).is_some() {
                return Err(Error::input(format!(
                    "draw {} of {} appears twice",
                    s.draw, s.intervention
                )));
            }
        }
        if rows.is_empty() {
            return Err(Error::InsufficientData("no PSA samples".into()));
        }
        let mut t = SampleTable {
            interventions,
            draws: Vec::with_capacity(rows.len()),
            cost: Vec::with_capacity(rows.len()),
            qaly: Vec::with_capacity(rows.len()),
        };
        for (d, row) in rows {
            let mut c = Vec::with_capacity(k);
            let mut q = Vec::with_capacity(k);
            for (j, cell) in row.into_iter().enumerate() {
                let (cj, qj) = cell.ok_or_else(|| {
                    Error::input(format!("draw {d} has no sample for {}", t.interventions[j]))
                })?;
                c.push(cj);
                q.push(qj);
            }
            t.draws.push(d);
            t.cost.push(c);
            t.qaly.push(q);
        }
        Ok(t)
    }

    pub fn index(&self, label: &str) -> Result<usize> {
        self.interventions
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| {
                Error::LabelMismatch(format!(
                    "no intervention `{label}` (have {})",
                    self.interventions.join(", ")
                ))
            })
    }

    pub fn mean_cost(&self, k: usize) -> f64 {
        self.cost.iter().map(|r| r[k]).sum::<f64>() / self.cost.len() as f64
    }

    pub fn mean_qaly(&self, k: usize) -> f64 {
        self.qaly.iter().map(|r| r[k]).sum::<f64>() / self.qaly.len() as f64
    }
}
