//! Random streams, distributions, 2×2 linear algebra and draw summaries.

mod dist;
mod linalg;
mod rng;
mod summary;

pub use dist::{Dist, Support};
pub use linalg::{cholesky2, correlated_normal_pair, Chol2, Sym2};
pub use rng::RandomStream;
pub use summary::{mean, quantile_sorted, se_from_ci, summarize, DrawSummary, HrInterval};
