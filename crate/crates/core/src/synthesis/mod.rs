//! Pooling relative effects across studies: pairwise fixed- and
//! random-effects meta-analysis, the bivariate OS/PFS model used to predict
//! unreported effects, indirect comparison through a common comparator, and
//! network meta-analysis.

mod brma;
mod indirect;
mod nma;
mod pairwise;
mod study;

pub use brma::{brma_fit, BrmaConfig, BrmaPosterior, Prediction, VarianceModel};
pub use indirect::{bucher_indirect, Contrast, Effect};
pub use nma::{nma_fit, ContrastGraph, NmaResult};
pub use pairwise::{fixed_effect_ma, random_effects_ma, Pooled, ReConfig, ReResult};
pub use study::{read_studies, write_studies, Outcome, StudyOutcome};
