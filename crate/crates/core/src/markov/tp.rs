use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::stats::{cholesky2, Sym2};

/// Probability of an event in `(t - u, t]` given survival to `t - u`, for
/// `S(t) = exp(-λ t^γ)`.
///
/// ```
/// use evsyn::markov::weibull_tp;
///
/// let p = weibull_tp(0.05, 1.2, 3.0, 1.0)?;
/// assert!((p - 0.0695).abs() < 5e-5);
/// # Ok::<(), evsyn::Error>(())
/// ```
pub fn weibull_tp(lambda: f64, gamma: f64, t: f64, u: f64) -> Result<f64> {
    if !(lambda > 0.0 && gamma > 0.0) {
        return Err(Error::param(format!(
            "Weibull λ and γ must be > 0, got ({lambda}, {gamma})"
        )));
    }
    if !(u > 0.0) || !(t >= u) {
        return Err(Error::param(format!("need t >= u > 0, got t={t}, u={u}")));
    }
    // 1 - exp(H(t-u) - H(t)), written to keep precision for small hazards
    Ok(-(lambda * ((t - u).powf(gamma) - t.powf(gamma))).exp_m1())
}

/// One draw of Weibull `(λ, γ)` from AFT coefficients with correlated
/// normal uncertainty.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeibullDraw {
    pub lambda: f64,
    pub gamma: f64,
    /// Draws discarded because the scale came out non-positive.
    pub rejections: u32,
}

const MAX_REDRAWS: u32 = 1000;

/// `(β*, α*) = (β, α) + D z` with `D` the Cholesky factor of `cov`, mapped to
/// `λ = exp(-β*/α*)`, `γ = 1/α*`. Draws with `α* <= 0` are discarded and
/// redrawn. A zero covariance gives the point estimate.
pub fn draw_weibull_params<R: Rng + ?Sized>(
    intercept: f64,
    scale: f64,
    cov: Sym2,
    rng: &mut R,
) -> Result<WeibullDraw> {
    if !(scale > 0.0) {
        return Err(Error::param(format!(
            "Weibull scale must be > 0, got {scale}"
        )));
    }
    let map = |beta: f64, alpha: f64, rejections| WeibullDraw {
        lambda: (-beta / alpha).exp(),
        gamma: 1.0 / alpha,
        rejections,
    };
    if cov.is_zero() {
        return Ok(map(intercept, scale, 0));
    }
    let d = cholesky2(cov)?;
    for rejections in 0..MAX_REDRAWS {
        let z = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        let (db, da) = d.apply(z);
        let alpha = scale + da;
        if alpha > 0.0 {
            return Ok(map(intercept + db, alpha, rejections));
        }
    }
    Err(Error::Infeasible(format!(
        "{MAX_REDRAWS} consecutive Weibull draws had a non-positive scale"
    )))
}

/// `1 - (1 - base)^HR`: a per-cycle probability under hazards multiplied by
/// `exp(log_hr)`.
pub fn scaled_tp(base: f64, log_hr: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&base) || !log_hr.is_finite() {
        return Err(Error::param(format!(
            "scaled_tp needs base in [0, 1] and a finite log HR, got ({base}, {log_hr})"
        )));
    }
    if base == 1.0 {
        // certain event stays certain
        return Ok(1.0);
    }
    Ok(-(log_hr.exp() * (-base).ln_1p()).exp_m1())
}

/// Constant per-cycle probability for an exponential time with the given
/// mean.
pub fn exp_tp_from_mean(mean: f64, u: f64) -> Result<f64> {
    if !(mean > 0.0) || !(u > 0.0) {
        return Err(Error::param(format!(
            "exponential mean time and cycle length must be > 0, got ({mean}, {u})"
        )));
    }
    if mean.is_infinite() {
        return Ok(0.0);
    }
    Ok(-(-u / mean).exp_m1())
}

/// Mean time from progression to death, taking the direct route to death
/// as negligible: `mean(total) - mean(time to progression)`.
pub fn pd_death_mean(total_mean: f64, std_to_pd_mean: f64) -> Result<f64> {
    let d = total_mean - std_to_pd_mean;
    if !(d > 0.0) {
        return Err(Error::Infeasible(format!(
            "mean survival {total_mean} does not exceed mean time to progression {std_to_pd_mean}"
        )));
    }
    Ok(d)
}

/// Annual step discounting: `(1 + rate)^-k` in year `k + 1`, counting
/// years from `start_cycle`. Cycles before it are undiscounted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Discounting {
    pub annual_rate: f64,
    pub start_cycle: usize,
    pub cycles_per_year: usize,
}

impl Default for Discounting {
    fn default() -> Self {
        Discounting {
            annual_rate: 0.035,
            start_cycle: 13,
            cycles_per_year: 12,
        }
    }
}

impl Discounting {
    pub fn factor(&self, cycle: usize) -> f64 {
        if cycle < self.start_cycle {
            return 1.0;
        }
        let years = (cycle - self.start_cycle) / self.cycles_per_year + 1;
        (1.0 + self.annual_rate).powi(years as i32).recip()
    }
}

/// Discount factor for 1-based monthly `cycle` of the 180-cycle model, at
/// 3.5% a year from cycle 13.
///
/// ```
/// use evsyn::markov::discount_factor;
///
/// assert_eq!(discount_factor(12)?, 1.0);
/// assert!((discount_factor(13)? - 0.96618).abs() < 5e-6);
/// assert!((discount_factor(25)? - 0.93351).abs() < 5e-6);
/// # Ok::<(), evsyn::Error>(())
/// ```
pub fn discount_factor(cycle: usize) -> Result<f64> {
    if !(1..=180).contains(&cycle) {
        return Err(Error::param(format!(
            "cycle must be in 1..=180, got {cycle}"
        )));
    }
    Ok(Discounting::default().factor(cycle))
}

/// Utility of stable disease as a mix of the surviving, progressing and
/// other-cause-death utilities weighted by this cycle's probabilities.
pub fn usd_utility(
    tp_stay: f64,
    tp_prog: f64,
    tp_death: f64,
    surviving: f64,
    progressed: f64,
    other_causes: f64,
) -> Result<f64> {
    let tps = [tp_stay, tp_prog, tp_death];
    if tps.iter().any(|p| !(0.0..=1.0).contains(p)) || (tps.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::param(format!(
            "stable-disease probabilities must lie in [0, 1] and sum to 1, got {tps:?}"
        )));
    }
    Ok(tp_stay * surviving + tp_prog * progressed + tp_death * other_causes)
}
