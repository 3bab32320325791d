//! Time-inhomogeneous Markov cohort models (stable disease and death, or
//! stable disease, progressed disease and death) with probabilistic
//! sensitivity analysis over their uncertain inputs.

mod cohort;
mod psa;
mod spec;
mod tp;

pub use cohort::{
    accrue_costs, run_cohort, CohortTrace, CostBreakdown, ParameterDraw, UtilityDraw,
};
pub use psa::{read_psa, run_psa, write_psa, PsaDetail, PsaResult, PsaSample};
pub use spec::{
    keyed_stream, CostRatio, InterventionSpec, ModelSpec, Transition, TransitionGen, Transitions,
    UtilitySpec, Variant,
};
pub use tp::{
    discount_factor, draw_weibull_params, exp_tp_from_mean, pd_death_mean, scaled_tp, usd_utility,
    weibull_tp, Discounting, WeibullDraw,
};
