use serde::Serialize;

use super::km::IpdRecord;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoxFit {
    /// Log hazard ratio of the non-reference arm versus the reference arm.
    pub log_hr: f64,
    pub se: f64,
    pub iterations: usize,
    pub converged: bool,
    pub treatment: String,
    pub reference: String,
}

const MAX_ITER: usize = 50;
const SCORE_TOL: f64 = 1e-8;
const MAX_STEP: f64 = 2.0;

/// Risk-set counts at each distinct event time.
struct Tally {
    d: Vec<f64>,
    d1: Vec<f64>,
    n0: Vec<f64>,
    n1: Vec<f64>,
}

impl Tally {
    fn loglik(&self, b: f64) -> f64 {
        let eb = b.exp();
        (0..self.d.len())
            .map(|i| self.d1[i] * b - self.d[i] * (self.n0[i] + self.n1[i] * eb).ln())
            .sum()
    }

    fn score_info(&self, b: f64) -> (f64, f64) {
        let eb = b.exp();
        let mut u = 0.0;
        let mut info = 0.0;
        for i in 0..self.d.len() {
            let p = self.n1[i] * eb / (self.n0[i] + self.n1[i] * eb);
            u += self.d1[i] - self.d[i] * p;
            info += self.d[i] * p * (1.0 - p);
        }
        (u, info)
    }

    /// The partial likelihood has a finite maximiser iff the score changes
    /// sign between b → −∞ and b → +∞.
    fn has_finite_max(&self) -> bool {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for i in 0..self.d.len() {
            lo += self.d1[i] - if self.n0[i] == 0.0 { self.d[i] } else { 0.0 };
            hi += self.d1[i] - if self.n1[i] > 0.0 { self.d[i] } else { 0.0 };
        }
        lo > 0.0 && hi < 0.0
    }
}

fn tally(data: &[IpdRecord], treatment: &str) -> Tally {
    let mut obs: Vec<(f64, bool, bool)> = data
        .iter()
        .map(|r| (r.time, r.event, r.arm == treatment))
        .collect();
    obs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut n0 = obs.iter().filter(|o| !o.2).count() as f64;
    let mut n1 = obs.len() as f64 - n0;
    let mut t = Tally {
        d: vec![],
        d1: vec![],
        n0: vec![],
        n1: vec![],
    };
    let mut i = 0;
    while i < obs.len() {
        let time = obs[i].0;
        let (mut d, mut d1, mut m0, mut m1) = (0.0, 0.0, 0.0, 0.0);
        while i < obs.len() && obs[i].0 == time {
            let (_, ev, trt) = obs[i];
            if ev {
                d += 1.0;
                d1 += trt as u8 as f64;
            }
            if trt {
                m1 += 1.0
            } else {
                m0 += 1.0
            }
            i += 1;
        }
        if d > 0.0 {
            t.d.push(d);
            t.d1.push(d1);
            t.n0.push(n0);
            t.n1.push(n1);
        }
        n0 -= m0;
        n1 -= m1;
    }
    t
}

/// Two-arm Cox model with Breslow ties, fitted by Newton-Raphson.
///
/// A monotone likelihood (no finite maximiser) is not an error: the last
/// iterate is returned with `converged = false`.
pub fn cox_fit(data: &[IpdRecord], reference: &str) -> Result<CoxFit> {
    let mut arms: Vec<&str> = data.iter().map(|r| r.arm.as_str()).collect();
    arms.sort_unstable();
    arms.dedup();
    if arms.len() != 2 || !arms.contains(&reference) {
        return Err(Error::input(format!(
            "Cox model needs exactly two arms including reference `{reference}`, found {arms:?}"
        )));
    }
    let treatment = if arms[0] == reference {
        arms[1]
    } else {
        arms[0]
    };
    if let Some(r) = data.iter().find(|r| !(r.time > 0.0 && r.time.is_finite())) {
        return Err(Error::input(format!(
            "observation time must be finite and > 0, got {}",
            r.time
        )));
    }
    if !data.iter().any(|r| r.event) {
        return Err(Error::Degenerate("no events in the pooled data".into()));
    }

    let tally = tally(data, treatment);
    let finite = tally.has_finite_max();
    let mut b = 0.0;
    let mut ll = tally.loglik(b);
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=MAX_ITER {
        iterations = it;
        let (u, info) = tally.score_info(b);
        if finite && u.abs() < SCORE_TOL {
            converged = true;
            iterations = it - 1;
            break;
        }
        if info <= 0.0 {
            break;
        }
        let mut step = (u / info).clamp(-MAX_STEP, MAX_STEP);
        // step halving keeps the concave objective increasing
        let mut next = b + step;
        let mut next_ll = tally.loglik(next);
        while next_ll < ll && step.abs() > 1e-12 {
            step *= 0.5;
            next = b + step;
            next_ll = tally.loglik(next);
        }
        b = next;
        ll = next_ll;
    }
    if finite && !converged {
        converged = tally.score_info(b).0.abs() < SCORE_TOL;
    }
    let (_, info) = tally.score_info(b);
    Ok(CoxFit {
        log_hr: b,
        se: 1.0 / info.sqrt(),
        iterations,
        converged,
        treatment: treatment.to_string(),
        reference: reference.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RandomStream;
    use rand::Rng;

    fn arm(times: &[(f64, bool)], label: &str) -> Vec<IpdRecord> {
        times
            .iter()
            .map(|&(t, e)| IpdRecord::new(t, e, label))
            .collect()
    }

    #[test]
    fn identical_arms_give_zero() {
        let t = [
            (1.0, true),
            (2.0, true),
            (3.0, false),
            (4.0, true),
            (4.0, true),
        ];
        let mut d = arm(&t, "A");
        d.extend(arm(&t, "B"));
        let fit = cox_fit(&d, "A").unwrap();
        assert!(fit.log_hr.abs() < 1e-6);
        assert!(fit.converged);
    }

    #[test]
    fn swap_negates() {
        let mut d = arm(&[(1.0, true), (3.0, true), (5.0, false), (6.0, true)], "A");
        d.extend(arm(
            &[(2.0, true), (2.5, false), (7.0, true), (8.0, true)],
            "B",
        ));
        let ab = cox_fit(&d, "A").unwrap();
        let ba = cox_fit(&d, "B").unwrap();
        assert!((ab.log_hr + ba.log_hr).abs() < 1e-12);
        assert!((ab.se - ba.se).abs() < 1e-12);
    }

    #[test]
    fn time_scale_invariance() {
        let mut rng = RandomStream::new(8, 0);
        let d: Vec<IpdRecord> = (0..60)
            .map(|i| {
                IpdRecord::new(
                    rng.random::<f64>() * 10.0 + 0.01,
                    rng.random::<f64>() < 0.7,
                    if i % 2 == 0 { "A" } else { "B" },
                )
            })
            .collect();
        let scaled: Vec<IpdRecord> = d
            .iter()
            .map(|r| IpdRecord::new(r.time * 3.7, r.event, r.arm.clone()))
            .collect();
        let a = cox_fit(&d, "A").unwrap();
        let b = cox_fit(&scaled, "A").unwrap();
        assert!((a.log_hr - b.log_hr).abs() < 1e-8);
    }

    #[test]
    fn monotone_likelihood_flagged() {
        // every event happens in B while A is still fully at risk
        let mut d = arm(&[(5.0, false), (6.0, false)], "A");
        d.extend(arm(&[(1.0, true), (2.0, true)], "B"));
        let fit = cox_fit(&d, "A").unwrap();
        assert!(!fit.converged);
        assert!(fit.log_hr > 5.0);
    }

    #[test]
    fn no_events_is_degenerate() {
        let mut d = arm(&[(5.0, false)], "A");
        d.extend(arm(&[(1.0, false)], "B"));
        assert!(matches!(cox_fit(&d, "A"), Err(Error::Degenerate(_))));
    }

    #[test]
    fn needs_two_arms() {
        let d = arm(&[(5.0, true)], "A");
        assert!(cox_fit(&d, "A").is_err());
    }
}
