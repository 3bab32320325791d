use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One reconstructed (or observed) patient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IpdRecord {
    /// Months from randomisation.
    pub time: f64,
    pub event: bool,
    pub arm: String,
}

impl IpdRecord {
    pub fn new(time: f64, event: bool, arm: impl Into<String>) -> Self {
        IpdRecord {
            time,
            event,
            arm: arm.into(),
        }
    }
}

/// A survival step function plus its number-at-risk table.
///
/// `steps` holds the survival value reached at each drop, so
/// `S(t) = steps[j].1` for `steps[j].0 <= t < steps[j+1].0` and `S(t) = 1`
/// before the first step. A leading `(0, 1)` point is accepted and ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    pub steps: Vec<(f64, f64)>,
    pub risk_table: Vec<(f64, usize)>,
}

impl KmCurve {
    pub fn new(steps: Vec<(f64, f64)>, risk_table: Vec<(f64, usize)>) -> Result<Self> {
        let mut steps = steps;
        if let Some(&(t, s)) = steps.first() {
            if t == 0.0 {
                if s != 1.0 {
                    return Err(Error::input(format!("curve must start at 1.0, got {s}")));
                }
                steps.remove(0);
            }
        }
        let curve = KmCurve { steps, risk_table };
        curve.validate()?;
        Ok(curve)
    }

    /// Clean noisy digitised coordinates into a valid step function:
    /// sort by time, clip to [0, 1], enforce monotonicity with a running
    /// minimum, and keep only points where the curve actually drops.
    pub fn from_digitized(points: &[(f64, f64)], risk_table: Vec<(f64, usize)>) -> Result<Self> {
        let mut pts: Vec<(f64, f64)> = points
            .iter()
            .copied()
            .filter(|(t, s)| t.is_finite() && s.is_finite() && *t >= 0.0)
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut steps: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
        let mut level = 1.0f64;
        for (t, s) in pts {
            let s = s.clamp(0.0, 1.0);
            if t == 0.0 || s >= level {
                continue;
            }
            level = s;
            match steps.last_mut() {
                Some(last) if last.0 == t => last.1 = s,
                _ => steps.push((t, s)),
            }
        }
        KmCurve::new(steps, risk_table)
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev_t = 0.0;
        let mut prev_s = 1.0;
        for (j, &(t, s)) in self.steps.iter().enumerate() {
            if !(t > prev_t) || !t.is_finite() {
                return Err(Error::input(format!(
                    "step {j}: times must be positive and strictly increasing"
                )));
            }
            if !(0.0..=1.0).contains(&s) || s > prev_s {
                return Err(Error::input(format!(
                    "step {j}: survival must be non-increasing within [0, 1]"
                )));
            }
            prev_t = t;
            prev_s = s;
        }
        for w in self.risk_table.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::input("risk table times must be strictly increasing"));
            }
            if w[1].1 > w[0].1 {
                return Err(Error::input("numbers at risk must be non-increasing"));
            }
        }
        if let Some(&(t0, _)) = self.risk_table.first() {
            if t0 < 0.0 {
                return Err(Error::input("risk table starts before time 0"));
            }
        }
        Ok(())
    }

    /// Right-continuous step function value at `t`.
    pub fn survival_at(&self, t: f64) -> f64 {
        let k = self.steps.partition_point(|&(st, _)| st <= t);
        if k == 0 {
            1.0
        } else {
            self.steps[k - 1].1
        }
    }

    /// Area under the step function on `[0, horizon]`.
    pub fn area(&self, horizon: f64) -> f64 {
        let mut area = 0.0;
        let mut prev_t = 0.0;
        let mut level = 1.0;
        for &(t, s) in &self.steps {
            if t >= horizon {
                break;
            }
            area += level * (t - prev_t);
            prev_t = t;
            level = s;
        }
        area + level * (horizon - prev_t).max(0.0)
    }
}

/// Product-limit estimate with the underlying counts at each distinct
/// event time.
#[derive(Clone, Debug, PartialEq)]
pub struct KmFit {
    pub times: Vec<f64>,
    pub n_risk: Vec<usize>,
    pub events: Vec<usize>,
    pub survival: Vec<f64>,
    /// All observation times, sorted; used for at-risk queries.
    sorted_times: Vec<f64>,
}

impl KmFit {
    /// Number with observation time `>= t`.
    pub fn at_risk(&self, t: f64) -> usize {
        self.sorted_times.len() - self.sorted_times.partition_point(|&x| x < t)
    }

    pub fn n(&self) -> usize {
        self.sorted_times.len()
    }

    pub fn first_time(&self) -> f64 {
        self.sorted_times[0]
    }

    pub fn curve(&self, grid: &[f64]) -> KmCurve {
        let steps = self
            .times
            .iter()
            .zip(&self.survival)
            .map(|(&t, &s)| (t, s))
            .collect();
        let risk_table = grid.iter().map(|&g| (g, self.at_risk(g))).collect();
        KmCurve { steps, risk_table }
    }

    pub fn survival_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }
}

pub fn km_fit(data: &[IpdRecord]) -> Result<KmFit> {
    if data.is_empty() {
        return Err(Error::InsufficientData(
            "Kaplan-Meier needs at least one record".into(),
        ));
    }
    for r in data {
        if !(r.time > 0.0 && r.time.is_finite()) {
            return Err(Error::input(format!(
                "observation time must be finite and > 0, got {}",
                r.time
            )));
        }
    }
    let mut obs: Vec<(f64, bool)> = data.iter().map(|r| (r.time, r.event)).collect();
    obs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let sorted_times: Vec<f64> = obs.iter().map(|o| o.0).collect();

    let mut fit = KmFit {
        times: vec![],
        n_risk: vec![],
        events: vec![],
        survival: vec![],
        sorted_times,
    };
    let mut s = 1.0;
    let mut at_risk = obs.len();
    let mut i = 0;
    while i < obs.len() {
        let t = obs[i].0;
        let mut d = 0;
        let mut m = 0;
        while i < obs.len() && obs[i].0 == t {
            d += obs[i].1 as usize;
            m += 1;
            i += 1;
        }
        if d > 0 {
            s *= 1.0 - d as f64 / at_risk as f64;
            fit.times.push(t);
            fit.n_risk.push(at_risk);
            fit.events.push(d);
            fit.survival.push(s);
        }
        at_risk -= m;
    }
    Ok(fit)
}

/// Kaplan-Meier curve for a single arm with its risk table evaluated on
/// `grid`.
pub fn km_estimate(data: &[IpdRecord], grid: &[f64]) -> Result<KmCurve> {
    Ok(km_fit(data)?.curve(grid))
}
