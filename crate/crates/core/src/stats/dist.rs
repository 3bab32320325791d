use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// A scalar distribution descriptor.
///
/// Normal and half-normal are parameterised by standard deviation; use
/// [`Dist::normal_var`] / [`Dist::half_normal_var`] when a variance is at
/// hand (e.g. the vague `Normal(0, 10^3)` priors, variance 10^3).
/// Gamma uses the (shape, rate) convention, so its mean is `shape / rate`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dist {
    Normal {
        mean: f64,
        sd: f64,
    },
    HalfNormal {
        sd: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    Beta {
        alpha: f64,
        beta: f64,
    },
    Gamma {
        shape: f64,
        rate: f64,
    },
    /// Degenerate point mass; used to switch uncertainty off.
    Point {
        value: f64,
    },
}

/// Support of a distribution (or of an MCMC parameter).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Support {
    Real,
    Positive,
    Interval(f64, f64),
}

impl Support {
    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Support::Real => x.is_finite(),
            Support::Positive => x > 0.0 && x.is_finite(),
            Support::Interval(lo, hi) => x > lo && x < hi,
        }
    }
}

impl Dist {
    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        Dist::Normal { mean, sd }.validated()
    }

    pub fn normal_var(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::param(format!(
                "normal variance must be > 0, got {variance}"
            )));
        }
        Dist::normal(mean, variance.sqrt())
    }

    pub fn half_normal(sd: f64) -> Result<Self> {
        Dist::HalfNormal { sd }.validated()
    }

    pub fn half_normal_var(variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::param(format!(
                "half-normal variance must be > 0, got {variance}"
            )));
        }
        Dist::half_normal(variance.sqrt())
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Dist::Uniform { lo, hi }.validated()
    }

    pub fn beta(alpha: f64, beta: f64) -> Result<Self> {
        Dist::Beta { alpha, beta }.validated()
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        Dist::Gamma { shape, rate }.validated()
    }

    /// Gamma matched to a mean and standard deviation (costs are usually
    /// reported that way).
    pub fn gamma_mean_sd(mean: f64, sd: f64) -> Result<Self> {
        if !(mean > 0.0 && sd > 0.0) {
            return Err(Error::param(format!(
                "gamma mean and sd must be > 0, got ({mean}, {sd})"
            )));
        }
        Dist::gamma((mean / sd).powi(2), mean / (sd * sd))
    }

    pub fn point(value: f64) -> Result<Self> {
        Dist::Point { value }.validated()
    }

    fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    /// Check parameter constraints. Descriptors deserialised from config
    /// files bypass the constructors, so loaders call this explicitly.
    pub fn validate(&self) -> Result<()> {
        let ok = |c: bool, msg: String| {
            if c {
                Ok(())
            } else {
                Err(Error::Parameter(msg))
            }
        };
        match *self {
            Dist::Normal { mean, sd } => {
                ok(
                    mean.is_finite(),
                    format!("normal mean must be finite, got {mean}"),
                )?;
                ok(
                    sd > 0.0 && sd.is_finite(),
                    format!("normal sd must be > 0, got {sd}"),
                )
            }
            Dist::HalfNormal { sd } => ok(
                sd > 0.0 && sd.is_finite(),
                format!("half-normal sd must be > 0, got {sd}"),
            ),
            Dist::Uniform { lo, hi } => ok(
                lo.is_finite() && hi.is_finite() && lo < hi,
                format!("uniform requires lo < hi, got ({lo}, {hi})"),
            ),
            Dist::Beta { alpha, beta } => ok(
                alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite(),
                format!("beta parameters must be > 0, got ({alpha}, {beta})"),
            ),
            Dist::Gamma { shape, rate } => ok(
                shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite(),
                format!("gamma shape and rate must be > 0, got ({shape}, {rate})"),
            ),
            Dist::Point { value } => ok(
                value.is_finite(),
                format!("point mass must be finite, got {value}"),
            ),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Dist::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            Dist::HalfNormal { sd } => {
                let z: f64 = StandardNormal.sample(rng);
                (sd * z).abs()
            }
            Dist::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Dist::Beta { alpha, beta } => Beta::new(alpha, beta)
                .expect("validated beta parameters")
                .sample(rng),
            Dist::Gamma { shape, rate } => Gamma::new(shape, 1.0 / rate)
                .expect("validated gamma parameters")
                .sample(rng),
            Dist::Point { value } => value,
        }
    }

    /// Log density at `x` (`-inf` outside the support). A point mass has
    /// log density 0 at its value.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Dist::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - LN_SQRT_2PI
            }
            Dist::HalfNormal { sd } => {
                if x < 0.0 {
                    return f64::NEG_INFINITY;
                }
                let z = x / sd;
                -0.5 * z * z - sd.ln() - LN_SQRT_2PI + std::f64::consts::LN_2
            }
            Dist::Uniform { lo, hi } => {
                if x < lo || x > hi {
                    f64::NEG_INFINITY
                } else {
                    -(hi - lo).ln()
                }
            }
            Dist::Beta { alpha, beta } => {
                if x <= 0.0 || x >= 1.0 {
                    return f64::NEG_INFINITY;
                }
                (alpha - 1.0) * x.ln() + (beta - 1.0) * (1.0 - x).ln() + ln_gamma(alpha + beta)
                    - ln_gamma(alpha)
                    - ln_gamma(beta)
            }
            Dist::Gamma { shape, rate } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
            }
            Dist::Point { value } => {
                if x == value {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Dist::Normal { mean, .. } => mean,
            Dist::HalfNormal { sd } => sd * (2.0 / std::f64::consts::PI).sqrt(),
            Dist::Uniform { lo, hi } => 0.5 * (lo + hi),
            Dist::Beta { alpha, beta } => alpha / (alpha + beta),
            Dist::Gamma { shape, rate } => shape / rate,
            Dist::Point { value } => value,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Dist::Normal { sd, .. } => sd * sd,
            Dist::HalfNormal { sd } => sd * sd * (1.0 - 2.0 / std::f64::consts::PI),
            Dist::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            Dist::Beta { alpha, beta } => {
                let s = alpha + beta;
                alpha * beta / (s * s * (s + 1.0))
            }
            Dist::Gamma { shape, rate } => shape / (rate * rate),
            Dist::Point { .. } => 0.0,
        }
    }

    pub fn support(&self) -> Support {
        match *self {
            Dist::Normal { .. } => Support::Real,
            Dist::HalfNormal { .. } | Dist::Gamma { .. } => Support::Positive,
            Dist::Uniform { lo, hi } => Support::Interval(lo, hi),
            Dist::Beta { .. } => Support::Interval(0.0, 1.0),
            Dist::Point { .. } => Support::Real,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RandomStream;

    fn moments(d: Dist, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = RandomStream::new(seed, 0);
        let xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        (m, v)
    }

    #[test]
    fn utility_beta_means() {
        let (m, _) = moments(Dist::beta(21.1, 18.1).unwrap(), 100_000, 1);
        assert!((m - 0.538).abs() < 0.005, "{m}");
        let (m, _) = moments(Dist::beta(581.3, 173.6).unwrap(), 100_000, 2);
        assert!((m - 0.770).abs() < 0.003, "{m}");
    }

    #[test]
    fn empirical_moments_within_four_se() {
        let n = 100_000;
        let families = [
            Dist::normal(1.5, 2.0).unwrap(),
            Dist::half_normal(3.0).unwrap(),
            Dist::uniform(-1.0, 4.0).unwrap(),
            Dist::beta(2.5, 7.0).unwrap(),
            Dist::gamma(105.0, 276.0).unwrap(),
            Dist::gamma(0.7, 2.0).unwrap(),
        ];
        for (i, d) in families.into_iter().enumerate() {
            let (m, v) = moments(d, n, 100 + i as u64);
            let se_mean = (d.variance() / n as f64).sqrt();
            assert!(
                (m - d.mean()).abs() < 4.0 * se_mean,
                "{d:?}: mean {m} vs {}",
                d.mean()
            );
            // variance check: se of the sample variance is ~ v*sqrt(2/n) for light tails,
            // use the kurtosis-free bound with a little slack for skewed families
            let se_var = d.variance() * (2.0 / n as f64).sqrt() * 2.0;
            assert!(
                (v - d.variance()).abs() < 4.0 * se_var,
                "{d:?}: var {v} vs {}",
                d.variance()
            );
        }
    }

    #[test]
    fn gamma_is_shape_rate() {
        let d = Dist::gamma(105.0, 276.0).unwrap();
        assert!((d.mean() - 105.0 / 276.0).abs() < 1e-15);
        assert!((d.mean() - 0.380).abs() < 1e-3);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(Dist::uniform(0.0, 0.0).is_err());
        assert!(Dist::uniform(1.0, 0.0).is_err());
        assert!(Dist::normal(0.0, 0.0).is_err());
        assert!(Dist::half_normal(-1.0).is_err());
        assert!(Dist::beta(0.0, 1.0).is_err());
        assert!(Dist::gamma(1.0, -2.0).is_err());
        assert!(Dist::normal_var(0.0, -1.0).is_err());
    }

    #[test]
    fn half_normal_is_folded_normal() {
        let hn = Dist::half_normal_var(1e3).unwrap();
        let n = Dist::normal_var(0.0, 1e3).unwrap();
        for x in [0.1, 3.0, 40.0] {
            assert!((hn.ln_pdf(x) - (n.ln_pdf(x) + std::f64::consts::LN_2)).abs() < 1e-12);
        }
        assert_eq!(hn.ln_pdf(-1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn densities_integrate_to_one() {
        for d in [
            Dist::beta(2.0, 3.0).unwrap(),
            Dist::gamma(3.0, 0.5).unwrap(),
            Dist::half_normal(2.0).unwrap(),
        ] {
            let (lo, hi) = match d {
                Dist::Beta { .. } => (0.0, 1.0),
                _ => (0.0, 60.0),
            };
            let n = 200_000;
            let h = (hi - lo) / n as f64;
            let total: f64 = (0..n)
                .map(|i| d.ln_pdf(lo + (i as f64 + 0.5) * h).exp() * h)
                .sum();
            assert!((total - 1.0).abs() < 1e-6, "{d:?}: {total}");
        }
    }

    #[test]
    fn json_shape() {
        let d: Dist = serde_json::from_str(r#"{"gamma": {"shape": 2.0, "rate": 4.0}}"#).unwrap();
        assert_eq!(
            d,
            Dist::Gamma {
                shape: 2.0,
                rate: 4.0
            }
        );
    }
}
