use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::stats::{Dist, Support};

/// A function of the full parameter vector.
pub type NodeFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Handle to a declared parameter; indexes the parameter vector handed to
/// factor and deterministic closures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

impl ParamId {
    pub fn get(self, theta: &[f64]) -> f64 {
        theta[self.0]
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Param {
    pub name: String,
    /// `None` for latent nodes whose density comes entirely from factors.
    pub prior: Option<Dist>,
    pub support: Support,
    pub init: Option<f64>,
}

/// A likelihood or hierarchical term.
#[derive(Clone)]
pub(crate) enum Factor {
    /// `residual(θ) ~ Normal(0, sd(θ)²)`. The residual is affine in each
    /// parameter listed in `linear`, and `sd` does not depend on them; any
    /// other dependency is listed in `nonlinear`.
    Normal {
        residual: NodeFn,
        sd: NodeFn,
        linear: Vec<ParamId>,
        nonlinear: Vec<ParamId>,
    },
    /// Arbitrary log density over `deps`.
    Custom {
        log_density: NodeFn,
        deps: Vec<ParamId>,
    },
}

impl Factor {
    pub fn touches(&self, p: ParamId) -> bool {
        match self {
            Factor::Normal {
                linear, nonlinear, ..
            } => linear.contains(&p) || nonlinear.contains(&p),
            Factor::Custom { deps, .. } => deps.contains(&p),
        }
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        match self {
            Factor::Normal { residual, sd, .. } => {
                let s = sd(theta);
                if !(s > 0.0) {
                    return f64::NEG_INFINITY;
                }
                let z = residual(theta) / s;
                -0.5 * z * z - s.ln()
            }
            Factor::Custom { log_density, .. } => log_density(theta),
        }
    }
}

/// A hierarchical model: named scalar parameters with priors, factors that
/// tie them to each other and to data, and deterministic nodes recorded
/// alongside the draws.
///
/// ```
/// use evsyn::mcmc::{run_chain, ChainConfig, ModelGraph};
/// use evsyn::stats::Dist;
///
/// // y = 3 observed with unit noise under a vague prior
/// let mut m = ModelGraph::new();
/// let mu = m.param("mu", Dist::normal_var(0.0, 1e6)?)?;
/// m.observe_normal(3.0, mu, 1.0)?;
/// let out = run_chain(&m, &ChainConfig::new(4_000, 1_000, 7))?;
/// assert!((out.summary("mu")?.mean - 3.0).abs() < 0.1);
/// # Ok::<(), evsyn::Error>(())
/// ```
#[derive(Clone, Default)]
pub struct ModelGraph {
    pub(crate) params: Vec<Param>,
    pub(crate) factors: Vec<Factor>,
    pub(crate) deterministic: Vec<(String, NodeFn)>,
    pub(crate) chain_inits: HashMap<(usize, usize), f64>,
}

impl ModelGraph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, name: &str, prior: Option<Dist>, support: Support) -> Result<ParamId> {
        if self.index_of(name).is_some() {
            return Err(Error::param(format!("duplicate node name `{name}`")));
        }
        self.params.push(Param {
            name: name.to_string(),
            prior,
            support,
            init: None,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    /// Parameter with its own prior.
    pub fn param(&mut self, name: &str, prior: Dist) -> Result<ParamId> {
        prior.validate()?;
        self.push(name, Some(prior), prior.support())
    }

    /// Real-valued latent node whose density is supplied by factors (a
    /// study-level true effect, say).
    pub fn latent(&mut self, name: &str) -> Result<ParamId> {
        self.push(name, None, Support::Real)
    }

    pub fn set_init(&mut self, p: ParamId, value: f64) {
        self.params[p.0].init = Some(value);
    }

    /// Starting value for one chain only; overrides [`ModelGraph::set_init`].
    pub fn set_chain_init(&mut self, chain: usize, p: ParamId, value: f64) {
        self.chain_inits.insert((chain, p.0), value);
    }

    /// `residual ~ Normal(0, sd²)`. List in `linear` the parameters the
    /// residual depends on affinely (and `sd` not at all), and in
    /// `nonlinear` every other dependency of either closure. Normal-prior
    /// parameters whose factors all list them as linear are updated by
    /// exact Gibbs draws, so a wrong declaration gives a wrong posterior.
    pub fn normal_factor(
        &mut self,
        residual: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        sd: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        linear: &[ParamId],
        nonlinear: &[ParamId],
    ) -> Result<()> {
        self.check(linear.iter().chain(nonlinear))?;
        self.factors.push(Factor::Normal {
            residual: Arc::new(residual),
            sd: Arc::new(sd),
            linear: linear.to_vec(),
            nonlinear: nonlinear.to_vec(),
        });
        Ok(())
    }

    /// Observation `y ~ Normal(mean, sd²)` with known `sd`.
    pub fn observe_normal(&mut self, y: f64, mean: ParamId, sd: f64) -> Result<()> {
        if !(sd > 0.0) {
            return Err(Error::param(format!(
                "observation sd must be > 0, got {sd}"
            )));
        }
        self.normal_factor(move |t| y - t[mean.0], move |_| sd, &[mean], &[])
    }

    /// `child ~ Normal(mean, sd²)` with `sd` itself a parameter.
    pub fn hierarchical_normal(
        &mut self,
        child: ParamId,
        mean: ParamId,
        sd: ParamId,
    ) -> Result<()> {
        self.normal_factor(
            move |t| t[child.0] - t[mean.0],
            move |t| t[sd.0],
            &[child, mean],
            &[sd],
        )
    }

    pub fn custom_factor(
        &mut self,
        deps: &[ParamId],
        log_density: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<()> {
        self.check(deps.iter())?;
        self.factors.push(Factor::Custom {
            log_density: Arc::new(log_density),
            deps: deps.to_vec(),
        });
        Ok(())
    }

    /// Quantity computed from the parameters and stored with each retained
    /// draw.
    pub fn deterministic(
        &mut self,
        name: &str,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<()> {
        if self.index_of(name).is_some() {
            return Err(Error::param(format!("duplicate node name `{name}`")));
        }
        self.deterministic.push((name.to_string(), Arc::new(f)));
        Ok(())
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.params
            .iter()
            .map(|p| p.name.as_str())
            .chain(self.deterministic.iter().map(|d| d.0.as_str()))
            .position(|n| n == name)
    }

    fn check<'a>(&self, ids: impl Iterator<Item = &'a ParamId>) -> Result<()> {
        for p in ids {
            if p.0 >= self.params.len() {
                return Err(Error::param(format!(
                    "factor references undeclared parameter #{}",
                    p.0
                )));
            }
        }
        Ok(())
    }

    /// Names of parameters followed by deterministic nodes, in recording
    /// order.
    pub fn node_names(&self) -> Vec<String> {
        self.params
            .iter()
            .map(|p| p.name.clone())
            .chain(self.deterministic.iter().map(|d| d.0.clone()))
            .collect()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        for (i, p) in self.params.iter().enumerate() {
            if p.prior.is_none() && !self.factors.iter().any(|f| f.touches(ParamId(i))) {
                return Err(Error::param(format!(
                    "latent `{}` has neither a prior nor any factor",
                    p.name
                )));
            }
        }
        Ok(())
    }

    /// Whether the full conditional of `p` is normal.
    pub(crate) fn is_conjugate(&self, p: ParamId) -> bool {
        let prior_ok = matches!(self.params[p.0].prior, None | Some(Dist::Normal { .. }));
        prior_ok
            && self.factors.iter().filter(|f| f.touches(p)).all(|f| {
                matches!(f, Factor::Normal { linear, nonlinear, .. } if linear.contains(&p) && !nonlinear.contains(&p))
            })
    }

    pub(crate) fn initial_value(&self, chain: usize, i: usize) -> f64 {
        if let Some(&v) = self.chain_inits.get(&(chain, i)) {
            return v;
        }
        let p = &self.params[i];
        p.init.unwrap_or_else(|| p.prior.map_or(0.0, |d| d.mean()))
    }
}
