use serde::Serialize;

use super::sampler::ChainOutput;
use crate::error::{Error, Result};

/// Split-R̂ above this flags a parameter as unconverged.
pub const RHAT_THRESHOLD: f64 = 1.05;

/// Minimum retained draws per chain for [`diagnose`].
pub const MIN_DRAWS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rhat {
    Value(f64),
    /// Fewer than two chains, or no within-chain variation.
    NotApplicable,
}

#[derive(Clone, Debug, Serialize)]
pub struct NodeDiagnostic {
    pub name: String,
    pub rhat: Rhat,
    /// `None` when the draws are constant.
    pub ess: Option<f64>,
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    pub nodes: Vec<NodeDiagnostic>,
}

impl Diagnostics {
    pub fn converged(&self) -> bool {
        !self.nodes.iter().any(|n| n.flagged)
    }

    pub fn get(&self, name: &str) -> Option<&NodeDiagnostic> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn max_rhat(&self) -> Option<f64> {
        self.nodes
            .iter()
            .filter_map(|n| match n.rhat {
                Rhat::Value(r) => Some(r),
                Rhat::NotApplicable => None,
            })
            .reduce(f64::max)
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (
        m,
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0),
    )
}

/// Each chain cut into two halves (a trailing odd draw is dropped).
fn split(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    chains
        .iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            [c[..h].to_vec(), c[c.len() - h..].to_vec()]
        })
        .collect()
}

/// Pooled variance estimate and within-chain variance of split chains.
fn variances(halves: &[Vec<f64>]) -> (f64, f64) {
    let n = halves[0].len() as f64;
    let stats: Vec<(f64, f64)> = halves.iter().map(|h| mean_var(h)).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / stats.len() as f64;
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let b = n * mean_var(&means).1;
    ((n - 1.0) / n * w + b / n, w)
}

pub fn split_rhat(chains: &[&[f64]]) -> Rhat {
    if chains.len() < 2 || chains.iter().any(|c| c.len() < 4) {
        return Rhat::NotApplicable;
    }
    let halves = split(chains);
    let (var_plus, w) = variances(&halves);
    if !(w > 0.0) {
        return Rhat::NotApplicable;
    }
    Rhat::Value((var_plus / w).sqrt())
}

/// Multi-chain effective sample size from the variogram estimate of the
/// autocorrelation, truncated with Geyer's initial positive sequence.
pub fn effective_sample_size(chains: &[&[f64]]) -> Option<f64> {
    if chains.iter().any(|c| c.len() < 4) {
        return None;
    }
    let halves = split(chains);
    let (var_plus, _) = variances(&halves);
    if !(var_plus > 0.0) {
        return None;
    }
    let m = halves.len();
    let n = halves[0].len();
    let rho = |t: usize| {
        let v: f64 = halves
            .iter()
            .map(|h| h.windows(t + 1).map(|w| (w[t] - w[0]).powi(2)).sum::<f64>() / (n - t) as f64)
            .sum::<f64>()
            / m as f64;
        1.0 - v / (2.0 * var_plus)
    };
    let mut sum = 0.0;
    let mut t = 1;
    while t + 1 < n {
        let pair = rho(t) + rho(t + 1);
        if pair < 0.0 {
            break;
        }
        sum += pair;
        t += 2;
    }
    Some((m * n) as f64 / (1.0 + 2.0 * sum))
}

/// Split-R̂ and effective sample size for every recorded node.
pub fn diagnose(output: &ChainOutput) -> Result<Diagnostics> {
    let per_chain = output.config.retained();
    if per_chain < MIN_DRAWS {
        return Err(Error::InsufficientData(format!(
            "diagnostics need at least {MIN_DRAWS} retained draws per chain, got {per_chain}"
        )));
    }
    let nodes = output
        .names()
        .iter()
        .map(|name| {
            let chains = output.chain_draws(name)?;
            let rhat = split_rhat(&chains);
            Ok(NodeDiagnostic {
                name: name.clone(),
                rhat,
                ess: effective_sample_size(&chains),
                flagged: matches!(rhat, Rhat::Value(r) if r > RHAT_THRESHOLD),
            })
        })
        .collect::<Result<_>>()?;
    Ok(Diagnostics { nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RandomStream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn white(seed: u64, n: usize, shift: f64) -> Vec<f64> {
        let mut rng = RandomStream::new(seed, 0);
        (0..n)
            .map(|_| shift + rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    #[test]
    fn constant_chains_not_applicable() {
        let c = vec![1.0; 200];
        assert_eq!(split_rhat(&[&c, &c]), Rhat::NotApplicable);
        assert_eq!(effective_sample_size(&[&c, &c]), None);
    }

    #[test]
    fn independent_draws() {
        let (a, b) = (white(1, 2000, 0.0), white(2, 2000, 0.0));
        match split_rhat(&[&a, &b]) {
            Rhat::Value(r) => assert!(r < 1.01, "{r}"),
            _ => panic!(),
        }
        let ess = effective_sample_size(&[&a, &b]).unwrap();
        assert!(ess > 3000.0 && ess < 5000.0, "{ess}");
    }

    #[test]
    fn separated_chains_flagged() {
        let (a, b) = (white(1, 500, 0.0), white(2, 500, 3.0));
        match split_rhat(&[&a, &b]) {
            Rhat::Value(r) => assert!(r > 1.5),
            _ => panic!(),
        }
    }

    #[test]
    fn ar1_ess_matches_theory() {
        // AR(1) with phi = 0.9 has ESS ratio (1 - phi) / (1 + phi)
        let mut rng = RandomStream::new(9, 0);
        let mut x = 0.0;
        let chain: Vec<f64> = (0..200_000)
            .map(|_| {
                let e: f64 = rng.sample(StandardNormal);
                x = 0.9 * x + e;
                x
            })
            .collect();
        let ess = effective_sample_size(&[&chain]).unwrap();
        let expected = 200_000.0 * 0.1 / 1.9;
        assert!((ess / expected - 1.0).abs() < 0.15, "{ess} vs {expected}");
    }
}
