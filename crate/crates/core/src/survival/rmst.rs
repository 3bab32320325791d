use serde::Serialize;

use super::km::KmFit;
use crate::error::{Error, Result};

/// Restricted mean survival time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanSurvival {
    pub mean: f64,
    pub se: f64,
    pub horizon: f64,
    pub warnings: Vec<String>,
}

/// Area under the Kaplan-Meier curve on `[0, horizon]`, with the
/// Greenwood-type variance `Σ A_j² d_j / (n_j (n_j − d_j))` where `A_j` is
/// the area from the j-th event time to the horizon.
pub fn restricted_mean(fit: &KmFit, horizon: f64) -> Result<MeanSurvival> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::param(format!(
            "horizon must be finite and > 0, got {horizon}"
        )));
    }
    let mut warnings = vec![];
    if horizon < fit.first_time() {
        warnings.push(format!(
            "horizon {horizon} precedes the first observation at {}; mean equals the horizon",
            fit.first_time()
        ));
    }

    let k = fit.times.partition_point(|&t| t < horizon);
    // area of each segment [t_j, t_{j+1}) with t_{-1} = 0
    let mut seg = Vec::with_capacity(k + 1);
    let mut prev = 0.0;
    let mut level = 1.0;
    for j in 0..k {
        seg.push(level * (fit.times[j] - prev));
        prev = fit.times[j];
        level = fit.survival[j];
    }
    seg.push(level * (horizon - prev));
    let mean: f64 = seg.iter().sum();

    // tail[j] = area from times[j] to the horizon
    let mut var = 0.0;
    let mut tail = 0.0;
    for j in (0..k).rev() {
        tail += seg[j + 1];
        let n = fit.n_risk[j] as f64;
        let d = fit.events[j] as f64;
        if n > d {
            var += tail * tail * d / (n * (n - d));
        }
    }
    Ok(MeanSurvival {
        mean,
        se: var.sqrt(),
        horizon,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RandomStream;
    use crate::survival::{km_fit, IpdRecord};
    use rand::Rng;

    #[test]
    fn flat_curve_gives_horizon() {
        let fit = km_fit(&[IpdRecord::new(20.0, false, "A")]).unwrap();
        let m = restricted_mean(&fit, 12.0).unwrap();
        assert_eq!(m.mean, 12.0);
        assert_eq!(m.se, 0.0);
    }

    #[test]
    fn single_drop() {
        let fit = km_fit(&[IpdRecord::new(6.0, true, "A")]).unwrap();
        assert_eq!(restricted_mean(&fit, 12.0).unwrap().mean, 6.0);
    }

    #[test]
    fn exponential_restricted_mean() {
        let mut rng = RandomStream::new(31, 0);
        let d: Vec<IpdRecord> = (0..4000)
            .map(|_| IpdRecord::new(-(1.0 - rng.random::<f64>()).ln() / 0.1, true, "A"))
            .collect();
        let m = restricted_mean(&km_fit(&d).unwrap(), 60.0).unwrap();
        let truth = (1.0 - (-6.0f64).exp()) / 0.1;
        assert!((m.mean - truth).abs() < 0.3, "{}", m.mean);
        assert!(m.se > 0.0 && m.se < 0.3);
    }

    #[test]
    fn early_horizon_warns() {
        let fit = km_fit(&[IpdRecord::new(6.0, true, "A")]).unwrap();
        let m = restricted_mean(&fit, 2.0).unwrap();
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.warnings.len(), 1);
    }
}
