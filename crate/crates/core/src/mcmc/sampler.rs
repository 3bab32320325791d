use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{Factor, ModelGraph, ParamId};
use crate::error::{Error, Result};
use crate::stats::{summarize, Dist, DrawSummary, RandomStream, Support};

/// Run length and seeding for [`run_chain`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    #[serde(default = "one")]
    pub thinning: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub n_chains: usize,
}

fn one() -> usize {
    1
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iterations: 30_000,
            burn_in: 15_000,
            thinning: 1,
            seed: 0,
            n_chains: 1,
        }
    }
}

impl ChainConfig {
    pub fn new(iterations: usize, burn_in: usize, seed: u64) -> Self {
        ChainConfig {
            iterations,
            burn_in,
            seed,
            ..Default::default()
        }
    }

    pub fn chains(mut self, n: usize) -> Self {
        self.n_chains = n;
        self
    }

    pub fn thin(mut self, k: usize) -> Self {
        self.thinning = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::param(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thinning == 0 || self.n_chains == 0 {
            return Err(Error::param(
                "thinning and number of chains must be at least 1",
            ));
        }
        Ok(())
    }

    /// Draws kept per chain.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thinning
    }
}

/// Retained draws and sampler bookkeeping for every chain.
#[derive(Clone, Debug)]
pub struct ChainOutput {
    names: Vec<String>,
    n_params: usize,
    /// `draws[chain][node][k]`
    draws: Vec<Vec<Vec<f64>>>,
    /// Post-adaptation acceptance rate per chain and parameter; `None` for
    /// Gibbs-updated and fixed parameters.
    pub acceptance: Vec<Vec<Option<f64>>>,
    /// Proposal scale in effect at every iteration, per chain and
    /// parameter (empty for parameters that are not random-walk updated).
    pub step_sizes: Vec<Vec<Vec<f64>>>,
    /// Proposals rejected outright because the density was not finite
    /// there (constraint violations), per chain and parameter.
    pub invalid_proposals: Vec<Vec<u64>>,
    pub warnings: Vec<String>,
    pub config: ChainConfig,
}

impl ChainOutput {
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_chains(&self) -> usize {
        self.draws.len()
    }

    /// Names of the sampled parameters (deterministic nodes excluded).
    pub fn param_names(&self) -> &[String] {
        &self.names[..self.n_params]
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::param(format!("no node named `{name}` in chain output")))
    }

    pub fn chain_draws(&self, name: &str) -> Result<Vec<&[f64]>> {
        let i = self.index(name)?;
        Ok(self.draws.iter().map(|c| c[i].as_slice()).collect())
    }

    /// All chains' draws for `name`, chain after chain.
    pub fn draws(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.index(name)?;
        Ok(self
            .draws
            .iter()
            .flat_map(|c| c[i].iter().copied())
            .collect())
    }

    pub fn summary(&self, name: &str) -> Result<DrawSummary> {
        summarize(&self.draws(name)?)
    }

    pub fn total_invalid(&self, name: &str) -> Result<u64> {
        let i = self.index(name)?;
        if i >= self.n_params {
            return Ok(0);
        }
        Ok(self.invalid_proposals.iter().map(|c| c[i]).sum())
    }
}

#[derive(Clone, Copy, Debug)]
enum Update {
    Fixed,
    Gibbs,
    Walk,
}

/// Unconstrained coordinate for the random walk.
fn to_free(s: Support, x: f64) -> f64 {
    match s {
        Support::Real => x,
        Support::Positive => x.ln(),
        Support::Interval(lo, hi) => {
            let u = (x - lo) / (hi - lo);
            (u / (1.0 - u)).ln()
        }
    }
}

/// Back-transform plus log Jacobian.
fn from_free(s: Support, z: f64) -> (f64, f64) {
    match s {
        Support::Real => (z, 0.0),
        Support::Positive => (z.exp(), z),
        Support::Interval(lo, hi) => {
            let u = 1.0 / (1.0 + (-z).exp());
            let ln_u = -(-z).exp().ln_1p();
            let ln_1mu = -z.exp().ln_1p();
            (lo + (hi - lo) * u, (hi - lo).ln() + ln_u + ln_1mu)
        }
    }
}

const BATCH: usize = 50;
const TARGET_ACCEPT: f64 = 0.35;

struct Plan {
    updates: Vec<Update>,
    /// factor indices touching each parameter
    touching: Vec<Vec<usize>>,
}

fn plan(model: &ModelGraph) -> Plan {
    let n = model.params.len();
    let updates = (0..n)
        .map(|i| {
            let p = &model.params[i];
            if matches!(p.prior, Some(Dist::Point { .. })) {
                Update::Fixed
            } else if model.is_conjugate(ParamId(i)) {
                Update::Gibbs
            } else {
                Update::Walk
            }
        })
        .collect();
    let touching = (0..n)
        .map(|i| {
            model
                .factors
                .iter()
                .enumerate()
                .filter(|(_, f)| f.touches(ParamId(i)))
                .map(|(k, _)| k)
                .collect()
        })
        .collect();
    Plan { updates, touching }
}

fn local_log_density(model: &ModelGraph, plan: &Plan, i: usize, theta: &[f64]) -> f64 {
    let x = theta[i];
    let prior = match model.params[i].prior {
        Some(d) => d.ln_pdf(x),
        None => {
            if x.is_finite() {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
    };
    if !prior.is_finite() {
        return f64::NEG_INFINITY;
    }
    let mut lp = prior;
    for &k in &plan.touching[i] {
        lp += model.factors[k].log_density(theta);
        if lp.is_nan() || lp == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
    }
    lp
}

/// Exact draw from a normal full conditional. Each touching factor's
/// residual is affine in the parameter, so two evaluations recover it.
fn gibbs_draw(
    model: &ModelGraph,
    plan: &Plan,
    i: usize,
    theta: &mut [f64],
    rng: &mut RandomStream,
) -> Result<()> {
    let (mut prec, mut lin) = (0.0, 0.0);
    if let Some(Dist::Normal { mean, sd }) = model.params[i].prior {
        prec += 1.0 / (sd * sd);
        lin += mean / (sd * sd);
    }
    let current = theta[i];
    for &k in &plan.touching[i] {
        let Factor::Normal { residual, sd, .. } = &model.factors[k] else {
            unreachable!("conjugacy checked when planning")
        };
        theta[i] = 0.0;
        let a = residual(theta);
        theta[i] = 1.0;
        let b = residual(theta) - a;
        let s2 = sd(theta).powi(2);
        prec += b * b / s2;
        lin -= a * b / s2;
    }
    if !(prec > 0.0 && prec.is_finite() && lin.is_finite()) {
        theta[i] = current;
        return Err(Error::NonConvergence(format!(
            "full conditional of `{}` is not a proper normal (precision {prec})",
            model.params[i].name
        )));
    }
    let z: f64 = rng.sample(StandardNormal);
    theta[i] = lin / prec + z / prec.sqrt();
    Ok(())
}

struct SingleChain {
    draws: Vec<Vec<f64>>,
    acceptance: Vec<Option<f64>>,
    steps: Vec<Vec<f64>>,
    invalid: Vec<u64>,
}

fn run_single(
    model: &ModelGraph,
    plan: &Plan,
    config: &ChainConfig,
    chain: usize,
) -> Result<SingleChain> {
    let n = model.params.len();
    let mut rng = RandomStream::new(config.seed, chain as u64);
    let mut theta: Vec<f64> = (0..n).map(|i| model.initial_value(chain, i)).collect();

    for (i, p) in model.params.iter().enumerate() {
        let prior_ok = p.prior.is_none_or(|d| d.ln_pdf(theta[i]).is_finite());
        if !prior_ok || !theta[i].is_finite() {
            return Err(Error::Initialization(format!(
                "chain {chain}: `{}` starts at {} outside its prior support",
                p.name, theta[i]
            )));
        }
    }
    for (k, f) in model.factors.iter().enumerate() {
        if !f.log_density(&theta).is_finite() {
            return Err(Error::Initialization(format!(
                "chain {chain}: factor #{k} has non-finite density at the starting values"
            )));
        }
    }

    let mut log_step = vec![0.0f64; n];
    let mut batch_accept = vec![0usize; n];
    let mut kept_accept = vec![0usize; n];
    let mut invalid = vec![0u64; n];
    let mut batches = 0usize;
    let walkers: Vec<usize> = (0..n)
        .filter(|&i| matches!(plan.updates[i], Update::Walk))
        .collect();
    let mut steps: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            if matches!(plan.updates[i], Update::Walk) {
                Vec::with_capacity(config.iterations)
            } else {
                vec![]
            }
        })
        .collect();
    let n_nodes = n + model.deterministic.len();
    let mut draws: Vec<Vec<f64>> = vec![Vec::with_capacity(config.retained()); n_nodes];

    for iter in 0..config.iterations {
        for i in 0..n {
            match plan.updates[i] {
                Update::Fixed => {}
                Update::Gibbs => gibbs_draw(model, plan, i, &mut theta, &mut rng)?,
                Update::Walk => {
                    let support = model.params[i].support;
                    let x = theta[i];
                    let z = to_free(support, x);
                    let (_, jac) = from_free(support, z);
                    let lp = local_log_density(model, plan, i, &theta) + jac;
                    let eps: f64 = rng.sample(StandardNormal);
                    let (x_new, jac_new) = from_free(support, z + log_step[i].exp() * eps);
                    theta[i] = x_new;
                    let lp_new = if support.contains(x_new) {
                        local_log_density(model, plan, i, &theta)
                    } else {
                        f64::NEG_INFINITY
                    };
                    let u: f64 = rng.random();
                    if !lp_new.is_finite() {
                        invalid[i] += 1;
                        theta[i] = x;
                    } else if u.ln() < lp_new + jac_new - lp {
                        batch_accept[i] += 1;
                        if iter >= config.burn_in {
                            kept_accept[i] += 1;
                        }
                    } else {
                        theta[i] = x;
                    }
                }
            }
        }
        for &i in &walkers {
            steps[i].push(log_step[i].exp());
        }
        if iter < config.burn_in && (iter + 1) % BATCH == 0 {
            // batch-wise adaptation towards TARGET_ACCEPT; frozen afterwards
            batches += 1;
            let gain = (10.0 / (batches as f64).sqrt()).min(1.0);
            for &i in &walkers {
                let rate = batch_accept[i] as f64 / BATCH as f64;
                log_step[i] += gain * (rate - TARGET_ACCEPT);
            }
        }
        if (iter + 1) % BATCH == 0 {
            batch_accept.iter_mut().for_each(|a| *a = 0);
        }
        if iter >= config.burn_in && (iter - config.burn_in + 1) % config.thinning == 0 {
            for (i, &x) in theta.iter().enumerate() {
                draws[i].push(x);
            }
            for (j, (_, f)) in model.deterministic.iter().enumerate() {
                draws[n + j].push(f(&theta));
            }
        }
    }

    let kept = (config.iterations - config.burn_in) as f64;
    let acceptance = (0..n)
        .map(|i| matches!(plan.updates[i], Update::Walk).then(|| kept_accept[i] as f64 / kept))
        .collect();
    Ok(SingleChain {
        draws,
        acceptance,
        steps,
        invalid,
    })
}

/// Run `config.n_chains` chains of Metropolis-within-Gibbs.
///
/// Parameters with a normal (or no) prior whose factors are all normal with
/// the parameter entering the residual affinely get exact Gibbs draws.
/// Everything else gets a component-wise random walk on an unconstrained
/// scale (log for positive, logit for bounded supports) whose proposal
/// scale adapts in batches of 50 during burn-in and is frozen after it.
/// Chain `c` draws from stream `c` of `config.seed`, so the output does not
/// depend on how chains are scheduled across threads.
pub fn run_chain(model: &ModelGraph, config: &ChainConfig) -> Result<ChainOutput> {
    config.validate()?;
    model.validate()?;
    let plan = plan(model);
    let chains: Vec<SingleChain> = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_single(model, &plan, config, c))
        .collect::<Result<_>>()?;

    let names = model.node_names();
    let mut warnings = vec![];
    for (c, ch) in chains.iter().enumerate() {
        for (i, a) in ch.acceptance.iter().enumerate() {
            if let Some(a) = *a {
                if !(0.05..=0.95).contains(&a) {
                    warnings.push(format!(
                        "chain {c}: acceptance rate of `{}` is {a:.3} after adaptation",
                        names[i]
                    ));
                }
            }
        }
    }
    let mut out = ChainOutput {
        names,
        n_params: model.params.len(),
        draws: vec![],
        acceptance: vec![],
        step_sizes: vec![],
        invalid_proposals: vec![],
        warnings,
        config: *config,
    };
    for ch in chains {
        out.draws.push(ch.draws);
        out.acceptance.push(ch.acceptance);
        out.step_sizes.push(ch.steps);
        out.invalid_proposals.push(ch.invalid);
    }
    Ok(out)
}
