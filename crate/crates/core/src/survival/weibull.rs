use serde::{Deserialize, Serialize};

use super::km::IpdRecord;
use crate::error::{Error, Result};
use crate::stats::Sym2;

/// Weibull fit in accelerated-failure-time form, `log T = β + α·W` with
/// `W` standard (minimum) extreme value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeibullFit {
    pub intercept: f64,
    pub scale: f64,
    /// Covariance of `(β, α)`.
    pub cov: Sym2,
    pub log_lik: f64,
}

impl WeibullFit {
    /// λ in `S(t) = exp(−λ t^γ)`.
    pub fn lambda(&self) -> f64 {
        aft_to_ph(self.intercept, self.scale).0
    }

    /// γ in `S(t) = exp(−λ t^γ)`.
    pub fn gamma(&self) -> f64 {
        aft_to_ph(self.intercept, self.scale).1
    }
}

/// Map AFT `(β, α)` to proportional-hazards `(λ, γ)`.
pub fn aft_to_ph(beta: f64, alpha: f64) -> (f64, f64) {
    ((-beta / alpha).exp(), 1.0 / alpha)
}

struct Obs {
    y: f64,
    delta: f64,
}

fn loglik(obs: &[Obs], beta: f64, alpha: f64) -> f64 {
    let la = alpha.ln();
    obs.iter()
        .map(|o| {
            let z = (o.y - beta) / alpha;
            o.delta * (z - la - o.y) - z.exp()
        })
        .sum()
}

/// Gradient and Hessian of the log-likelihood in `(β, α)`.
fn derivatives(obs: &[Obs], beta: f64, alpha: f64) -> ([f64; 2], Sym2) {
    let mut g = [0.0; 2];
    let (mut hbb, mut hba, mut haa) = (0.0, 0.0, 0.0);
    for o in obs {
        let z = (o.y - beta) / alpha;
        let ez = z.exp();
        let d = o.delta;
        g[0] += (ez - d) / alpha;
        g[1] += (-d - d * z + z * ez) / alpha;
        hbb += -ez;
        hba += d - ez - z * ez;
        haa += d + 2.0 * z * (d - ez) - z * z * ez;
    }
    let a2 = alpha * alpha;
    (g, Sym2::new(hbb / a2, hba / a2, haa / a2))
}

/// Log-likelihood of a Weibull AFT model at given parameters.
pub fn weibull_loglik(data: &[IpdRecord], beta: f64, alpha: f64) -> f64 {
    let obs: Vec<Obs> = data
        .iter()
        .map(|r| Obs {
            y: r.time.ln(),
            delta: r.event as u8 as f64,
        })
        .collect();
    loglik(&obs, beta, alpha)
}

const MAX_ITER: usize = 100;

/// Maximum-likelihood Weibull fit to a single arm with right censoring.
pub fn weibull_fit(data: &[IpdRecord]) -> Result<WeibullFit> {
    let events = data.iter().filter(|r| r.event).count();
    if events < 2 {
        return Err(Error::InsufficientData(format!(
            "Weibull fit needs at least 2 events, got {events}"
        )));
    }
    if let Some(r) = data.iter().find(|r| !(r.time > 0.0 && r.time.is_finite())) {
        return Err(Error::input(format!(
            "observation time must be finite and > 0, got {}",
            r.time
        )));
    }
    let obs: Vec<Obs> = data
        .iter()
        .map(|r| Obs {
            y: r.time.ln(),
            delta: r.event as u8 as f64,
        })
        .collect();

    // exponential MLE as the starting point
    let exposure: f64 = data.iter().map(|r| r.time).sum();
    let mut beta = (exposure / events as f64).ln();
    let mut alpha = 1.0;
    let mut ll = loglik(&obs, beta, alpha);

    for _ in 0..MAX_ITER {
        let (g, h) = derivatives(&obs, beta, alpha);
        if g[0].abs().max(g[1].abs()) < 1e-8 * (1.0 + ll.abs()).min(1e4) {
            return finish(&obs, beta, alpha, ll);
        }
        // Newton direction if −H is positive definite, otherwise ascent
        let neg = Sym2::new(-h.a, -h.b, -h.c);
        let (mut db, mut da) = match neg.inverse() {
            Ok(inv) => (inv.a * g[0] + inv.b * g[1], inv.b * g[0] + inv.c * g[1]),
            Err(_) => (g[0] * 1e-3, g[1] * 1e-3),
        };
        // keep α positive
        while alpha + da <= 0.0 {
            db *= 0.5;
            da *= 0.5;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let next = loglik(&obs, beta + db, alpha + da);
            if next.is_finite() && next >= ll - 1e-12 * ll.abs() {
                let small = db.abs().max(da.abs()) < 1e-12;
                beta += db;
                alpha += da;
                ll = next;
                accepted = true;
                if small {
                    return finish(&obs, beta, alpha, ll);
                }
                break;
            }
            db *= 0.5;
            da *= 0.5;
        }
        if !accepted {
            return finish(&obs, beta, alpha, ll);
        }
    }
    Err(Error::NonConvergence(format!(
        "Weibull fit did not converge in {MAX_ITER} iterations (β={beta}, α={alpha})"
    )))
}

fn finish(obs: &[Obs], beta: f64, alpha: f64, ll: f64) -> Result<WeibullFit> {
    let (_, h) = derivatives(obs, beta, alpha);
    let cov = Sym2::new(-h.a, -h.b, -h.c).inverse()?;
    Ok(WeibullFit {
        intercept: beta,
        scale: alpha,
        cov,
        log_lik: ll,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RandomStream;
    use rand::Rng;

    fn weibull_sample(n: usize, lambda: f64, gamma: f64, cens: f64, seed: u64) -> Vec<IpdRecord> {
        let mut rng = RandomStream::new(seed, 0);
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let t = (-(1.0 - u).ln() / lambda).powf(1.0 / gamma);
                if t > cens {
                    IpdRecord::new(cens, false, "A")
                } else {
                    IpdRecord::new(t, true, "A")
                }
            })
            .collect()
    }

    #[test]
    fn mapping() {
        let (l, g) = aft_to_ph(2.0, 1.0);
        assert!((l - 0.135_335_283).abs() < 1e-8);
        assert_eq!(g, 1.0);
    }

    #[test]
    fn exponential_recovery() {
        let d = weibull_sample(5000, 0.1, 1.0, f64::INFINITY, 21);
        let f = weibull_fit(&d).unwrap();
        assert!((0.97..=1.03).contains(&f.gamma()), "{}", f.gamma());
        assert!((0.095..=0.105).contains(&f.lambda()), "{}", f.lambda());
    }

    #[test]
    fn censored_weibull_recovery() {
        let (lambda, gamma) = (0.05, 1.5);
        let cens = (-(0.2f64).ln() / lambda).powf(1.0 / gamma);
        let d = weibull_sample(5000, lambda, gamma, cens, 22);
        let censored = d.iter().filter(|r| !r.event).count() as f64 / d.len() as f64;
        assert!((censored - 0.2).abs() < 0.03);
        let f = weibull_fit(&d).unwrap();
        assert!((f.lambda() / lambda - 1.0).abs() < 0.05, "{}", f.lambda());
        assert!((f.gamma() / gamma - 1.0).abs() < 0.05, "{}", f.gamma());
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let d = weibull_sample(200, 0.05, 1.3, 15.0, 23);
        let obs: Vec<Obs> = d
            .iter()
            .map(|r| Obs {
                y: r.time.ln(),
                delta: r.event as u8 as f64,
            })
            .collect();
        let (b, a, h) = (2.1, 0.8, 1e-5);
        let (g, hess) = derivatives(&obs, b, a);
        let fd_b = (loglik(&obs, b + h, a) - loglik(&obs, b - h, a)) / (2.0 * h);
        let fd_a = (loglik(&obs, b, a + h) - loglik(&obs, b, a - h)) / (2.0 * h);
        assert!((g[0] - fd_b).abs() < 1e-4 * fd_b.abs().max(1.0));
        assert!((g[1] - fd_a).abs() < 1e-4 * fd_a.abs().max(1.0));
        let gb = |b2, a2| derivatives(&obs, b2, a2).0;
        let hbb = (gb(b + h, a)[0] - gb(b - h, a)[0]) / (2.0 * h);
        let hba = (gb(b, a + h)[0] - gb(b, a - h)[0]) / (2.0 * h);
        let haa = (gb(b, a + h)[1] - gb(b, a - h)[1]) / (2.0 * h);
        assert!((hess.a - hbb).abs() < 1e-4 * hbb.abs().max(1.0));
        assert!((hess.b - hba).abs() < 1e-4 * hba.abs().max(1.0));
        assert!((hess.c - haa).abs() < 1e-4 * haa.abs().max(1.0));
    }

    #[test]
    fn optimum_beats_perturbations() {
        let d = weibull_sample(300, 0.08, 1.2, 12.0, 24);
        let f = weibull_fit(&d).unwrap();
        let mut rng = RandomStream::new(25, 0);
        for _ in 0..200 {
            let b = f.intercept + (rng.random::<f64>() - 0.5) * 0.2;
            let a = f.scale * (1.0 + (rng.random::<f64>() - 0.5) * 0.2);
            assert!(weibull_loglik(&d, b, a) <= f.log_lik + 1e-9);
        }
    }

    #[test]
    fn too_few_events() {
        let d = vec![
            IpdRecord::new(1.0, true, "A"),
            IpdRecord::new(2.0, false, "A"),
        ];
        assert!(matches!(weibull_fit(&d), Err(Error::InsufficientData(_))));
    }
}
