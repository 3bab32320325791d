//! Kaplan-Meier estimation, curve reconstruction, Cox and Weibull fits.

mod cox;
mod io;
mod km;
mod reconstruct;
mod rmst;
mod weibull;

pub use cox::{cox_fit, CoxFit};
pub(crate) use io::{csv_err, read_rows, write_rows};
pub use io::{read_ipd, read_km_curve, write_ipd, write_km_curve};
pub use km::{km_estimate, km_fit, IpdRecord, KmCurve, KmFit};
pub use reconstruct::{reconstruct_ipd, TOLERANCE as RECONSTRUCTION_TOLERANCE};
pub use rmst::{restricted_mean, MeanSurvival};
pub use weibull::{aft_to_ph, weibull_fit, weibull_loglik, WeibullFit};
