pub mod econ;
pub mod error;
pub mod markov;
pub mod mcmc;
pub mod stats;
pub mod survival;
pub mod synthesis;

pub use error::{Error, ErrorKind, Result};

// the guide's snippets run as doc-tests
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/reconstruction.md")]
    mod reconstruction {}
    #[doc = include_str!("../../../book/src/pooling.md")]
    mod pooling {}
    #[doc = include_str!("../../../book/src/brma.md")]
    mod brma {}
    #[doc = include_str!("../../../book/src/cohort.md")]
    mod cohort {}
    #[doc = include_str!("../../../book/src/decisions.md")]
    mod decisions {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
