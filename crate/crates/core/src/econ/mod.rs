//! Decision outputs from PSA samples: ICERs with their plane quadrant,
//! net monetary benefit, acceptability curves and the cost-effectiveness
//! plane.

mod ceac;
mod icer;
mod plot;
mod table;

pub use ceac::{
    ce_plane, ceac, threshold_grid, write_plane, CeResult, Ceac, CeacRow, InterventionOutcome,
    PlanePoint,
};
pub use icer::{icer, net_benefit, net_benefit_summary, Icer, NetBenefit, Quadrant, QALY_EPS};
pub use plot::{ceac_svg, plane_svg};
pub use table::SampleTable;
