//! Metropolis-within-Gibbs sampling for small hierarchical models, with
//! split-R̂ and effective-sample-size diagnostics.

mod diagnostics;
mod model;
mod sampler;

pub use diagnostics::{
    diagnose, effective_sample_size, split_rhat, Diagnostics, NodeDiagnostic, Rhat, MIN_DRAWS,
    RHAT_THRESHOLD,
};
pub use model::{ModelGraph, NodeFn, ParamId};
pub use sampler::{run_chain, ChainConfig, ChainOutput};
