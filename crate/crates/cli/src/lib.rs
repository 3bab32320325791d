//! Command-line pipeline: reconstruct published curves, synthesise the
//! relative effects, run both cohort models and write the decision outputs.

pub mod case_study;
pub mod config;
pub mod pipeline;
