use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Posterior (or sampling) summary of a scalar quantity.
///
/// `sd` is the sample standard deviation of the draws, which is what the
/// tables label "SE". Percentiles are type-7 (linear interpolation between
/// order statistics).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawSummary {
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
}

/// Type-7 quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn summarize(draws: &[f64]) -> Result<DrawSummary> {
    if draws.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "summary needs at least 2 draws, got {}",
            draws.len()
        )));
    }
    if let Some(x) = draws.iter().find(|x| !x.is_finite()) {
        return Err(Error::input(format!("non-finite draw {x}")));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    // summing in sorted order makes the result independent of input order
    let m = mean(&sorted);
    let var = sorted.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (sorted.len() - 1) as f64;
    Ok(DrawSummary {
        mean: m,
        sd: var.sqrt(),
        median: quantile_sorted(&sorted, 0.5),
        lower: quantile_sorted(&sorted, 0.025),
        upper: quantile_sorted(&sorted, 0.975),
        n: sorted.len(),
    })
}

/// A hazard ratio with a 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HrInterval {
    pub hr: f64,
    pub lower: f64,
    pub upper: f64,
}

impl HrInterval {
    pub fn new(hr: f64, lower: f64, upper: f64) -> Self {
        HrInterval { hr, lower, upper }
    }

    /// Symmetric normal interval on the log scale.
    pub fn from_log(log_hr: f64, se: f64) -> Self {
        HrInterval {
            hr: log_hr.exp(),
            lower: (log_hr - 1.96 * se).exp(),
            upper: (log_hr + 1.96 * se).exp(),
        }
    }

    /// Log-scale point and SE implied by the interval width.
    pub fn to_log(&self) -> Result<(f64, f64)> {
        Ok((self.hr.ln(), se_from_ci(self.lower, self.upper)?))
    }
}

impl fmt::Display for HrInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ({:.3}, {:.3})", self.hr, self.lower, self.upper)
    }
}

impl DrawSummary {
    /// Map a summary of log-HR draws onto the HR scale. The point estimate
    /// is exp(median), the percentile interval maps exactly.
    pub fn to_hr(&self) -> HrInterval {
        HrInterval {
            hr: self.median.exp(),
            lower: self.lower.exp(),
            upper: self.upper.exp(),
        }
    }
}

/// SE of a log HR from a 95% CI on the HR scale.
pub fn se_from_ci(lower: f64, upper: f64) -> Result<f64> {
    if !(lower > 0.0 && upper > lower && upper.is_finite()) {
        return Err(Error::input(format!(
            "confidence limits must satisfy 0 < lower < upper, got ({lower}, {upper})"
        )));
    }
    Ok((upper.ln() - lower.ln()) / (2.0 * 1.96))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RandomStream;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_sequence() {
        let s = summarize(&[1.0; 4]).unwrap();
        assert_eq!((s.mean, s.lower, s.upper, s.sd), (1.0, 1.0, 1.0, 0.0));
    }

    #[test]
    fn interpolated_percentiles() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = summarize(&xs).unwrap();
        assert!((s.lower - 3.475).abs() < 1e-12);
        assert!((s.upper - 97.525).abs() < 1e-12);
        assert_eq!(s.median, 50.5);
    }

    #[test]
    fn standard_normal_interval() {
        let mut rng = RandomStream::new(5, 0);
        let xs: Vec<f64> = (0..1_000_000)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let s = summarize(&xs).unwrap();
        assert!((s.lower + 1.96).abs() < 0.01, "{}", s.lower);
        assert!((s.upper - 1.96).abs() < 0.01, "{}", s.upper);
    }

    #[test]
    fn too_few_draws() {
        assert!(matches!(summarize(&[]), Err(Error::InsufficientData(_))));
        assert!(matches!(summarize(&[2.0]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn se_from_published_intervals() {
        assert!((se_from_ci(0.62, 0.94).unwrap() - 0.1061).abs() < 1e-4);
        assert!((se_from_ci(0.32, 0.68).unwrap() - 0.1923).abs() < 1e-4);
        let x = 0.37;
        assert!((se_from_ci(x, x * 3.92f64.exp()).unwrap() - 1.0).abs() < 1e-12);
        assert!(se_from_ci(0.9, 0.8).is_err());
        assert!(se_from_ci(0.0, 0.8).is_err());
    }

    #[test]
    fn display_three_decimals() {
        assert_eq!(
            HrInterval::new(0.9031, 0.75149, 1.0841).to_string(),
            "0.903 (0.751, 1.084)"
        );
    }

    proptest! {
        #[test]
        fn permutation_invariant(mut xs in prop::collection::vec(-1e6f64..1e6, 2..200), seed in any::<u64>()) {
            let a = summarize(&xs).unwrap();
            // Fisher-Yates with a fixed stream
            let mut rng = RandomStream::new(seed, 0);
            use rand::Rng;
            for i in (1..xs.len()).rev() {
                let j = rng.random_range(0..=i);
                xs.swap(i, j);
            }
            let b = summarize(&xs).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn lower_not_above_upper(xs in prop::collection::vec(-1e3f64..1e3, 2..100)) {
            let s = summarize(&xs).unwrap();
            prop_assert!(s.lower <= s.median && s.median <= s.upper);
        }
    }
}
