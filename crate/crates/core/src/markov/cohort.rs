use rand::Rng;
use serde::Serialize;

use super::spec::{
    keyed_stream, InterventionSpec, ModelSpec, Transition, TransitionGen, UtilitySpec, Variant,
};
use super::tp::usd_utility;
use crate::error::{Error, Result};
use crate::stats::{Dist, RandomStream};

/// Utilities drawn once per PSA draw and shared by all interventions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UtilityDraw {
    pub progressed: f64,
    pub surviving: f64,
    pub other_causes: f64,
}

impl UtilityDraw {
    pub fn sample<R: Rng + ?Sized>(spec: &UtilitySpec, rng: &mut R) -> Self {
        UtilityDraw {
            progressed: spec.progressed.sample(rng),
            surviving: spec.surviving.sample(rng),
            other_causes: spec.other_causes.sample(rng),
        }
    }

    /// Every utility at its distribution mean.
    pub fn mean(spec: &UtilitySpec) -> Self {
        UtilityDraw {
            progressed: spec.progressed.mean(),
            surviving: spec.surviving.mean(),
            other_causes: spec.other_causes.mean(),
        }
    }
}

/// One intervention's parameters for one PSA draw.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterDraw {
    pub std_death: Transition,
    pub std_pd: Option<Transition>,
    pub pd_death: Option<Transition>,
    pub drug_cost_per_cycle: f64,
    pub mean_cycles: Option<f64>,
    /// Per patient, after any cost ratio.
    pub follow_up_cost: f64,
    pub terminal_care_cost: f64,
    pub division_factor: f64,
    /// Weibull draws discarded for a non-positive scale.
    pub rejections: u32,
}

impl ParameterDraw {
    /// Draw every uncertain input of `iv` for the PSA draw whose stream is
    /// `root`. Each input has its own keyed stream, so identical inputs in
    /// different interventions take identical values.
    pub fn sample(spec: &ModelSpec, iv: &InterventionSpec, root: &RandomStream) -> Result<Self> {
        let u = spec.cycle_length;
        let t = &iv.transitions;
        let mut rejections = 0;
        let mut realize = |role: &str, g: &TransitionGen| -> Result<Transition> {
            let (tr, rej) = g.realize(role, u, root)?;
            rejections += rej;
            Ok(tr)
        };
        let std_death = realize("std_death", &t.std_death)?;
        let (std_pd, pd_death) = match spec.variant {
            Variant::TwoState => (None, None),
            Variant::ThreeState => (
                Some(realize("std_pd", t.std_pd.as_ref().expect("validated"))?),
                Some(realize(
                    "pd_death",
                    t.pd_death.as_ref().expect("validated"),
                )?),
            ),
        };
        let draw = |role: &str, d: &Dist| d.sample(&mut keyed_stream(root, role, d));
        let mean_cycles = iv.mean_cycles.map(|d| draw("mean_cycles", &d).max(0.0));
        let ratio = iv.cost_ratio.map_or(1.0, |r| {
            draw("cost_ratio/numerator", &r.numerator)
                / draw("cost_ratio/denominator", &r.denominator)
        });
        let follow_up_cost = draw("follow_up_cost", &iv.follow_up_cost) * ratio;
        let terminal_care_cost = draw("terminal_care_cost", &iv.terminal_care_cost) * ratio;
        if !(follow_up_cost >= 0.0 && terminal_care_cost >= 0.0) {
            return Err(Error::Infeasible(format!(
                "{}: negative cost drawn",
                iv.label
            )));
        }
        Ok(ParameterDraw {
            std_death,
            std_pd,
            pd_death,
            drug_cost_per_cycle: iv.drug_cost_per_cycle,
            mean_cycles,
            follow_up_cost,
            terminal_care_cost,
            division_factor: iv.division_factor,
            rejections,
        })
    }
}

/// Expected cohort counts per cycle. State vectors have `cycles + 1`
/// entries (index 0 is the start); event and accrual vectors have one per
/// cycle.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CohortTrace {
    pub variant: Variant,
    pub cohort_size: f64,
    pub cycle_length: f64,
    pub stable: Vec<f64>,
    /// All zero in the two-state model.
    pub progressed: Vec<f64>,
    pub dead: Vec<f64>,
    /// Moves from stable to progressed disease during each cycle.
    pub new_progressions: Vec<f64>,
    pub new_deaths: Vec<f64>,
    /// Discount factor applied to each cycle.
    pub discount: Vec<f64>,
    /// Discounted QALYs accrued by the whole cohort in each cycle.
    pub qaly: Vec<f64>,
}

impl CohortTrace {
    pub fn cycles(&self) -> usize {
        self.new_deaths.len()
    }

    /// Mean months per patient in stable disease (occupancy at the start
    /// of each cycle).
    pub fn time_stable(&self) -> f64 {
        self.occupancy(&self.stable)
    }

    pub fn time_progressed(&self) -> f64 {
        self.occupancy(&self.progressed)
    }

    pub fn time_alive(&self) -> f64 {
        let alive: Vec<f64> = self
            .stable
            .iter()
            .zip(&self.progressed)
            .map(|(s, p)| s + p)
            .collect();
        self.occupancy(&alive)
    }

    fn occupancy(&self, state: &[f64]) -> f64 {
        state[..self.cycles()].iter().sum::<f64>() * self.cycle_length / self.cohort_size
    }

    /// Discounted QALYs per patient.
    pub fn qaly_per_patient(&self) -> f64 {
        self.qaly.iter().sum::<f64>() / self.cohort_size
    }
}

fn check_prob(p: f64, what: &str, cycle: usize) -> Result<f64> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(Error::Infeasible(format!(
            "{what} probability {p} in cycle {cycle} is outside [0, 1]"
        )))
    }
}

/// Advance the expected cohort through `spec.cycles` cycles. Utilities
/// accrue on the occupancy at the start of each cycle at `cycle_length /
/// 12` years per cycle, without half-cycle correction.
pub fn run_cohort(
    spec: &ModelSpec,
    draw: &ParameterDraw,
    utilities: &UtilityDraw,
) -> Result<CohortTrace> {
    let n = spec.cycles;
    let u = spec.cycle_length;
    let disc = spec.discounting();
    let years_per_cycle = u / 12.0;
    let mut tr = CohortTrace {
        variant: spec.variant,
        cohort_size: spec.cohort_size,
        cycle_length: u,
        stable: Vec::with_capacity(n + 1),
        progressed: Vec::with_capacity(n + 1),
        dead: Vec::with_capacity(n + 1),
        new_progressions: Vec::with_capacity(n),
        new_deaths: Vec::with_capacity(n),
        discount: Vec::with_capacity(n),
        qaly: Vec::with_capacity(n),
    };
    let (mut s, mut p, mut d) = (spec.cohort_size, 0.0, 0.0);
    tr.stable.push(s);
    tr.progressed.push(p);
    tr.dead.push(d);
    for cycle in 1..=n {
        let t = cycle as f64 * u;
        let p_sd = check_prob(draw.std_death.prob(t, u)?, "stable-to-death", cycle)?;
        let (p_sp, p_pd) = match (&draw.std_pd, &draw.pd_death) {
            (Some(a), Some(b)) => (
                check_prob(a.prob(t, u)?, "progression", cycle)?,
                check_prob(b.prob(t, u)?, "progressed-to-death", cycle)?,
            ),
            _ => (0.0, 0.0),
        };
        if p_sp + p_sd > 1.0 + 1e-12 {
            return Err(Error::Infeasible(format!(
                "cycle {cycle}: leaving stable disease with probability {}",
                p_sp + p_sd
            )));
        }
        let stay = (1.0 - p_sp - p_sd).max(0.0);
        let u_stable = match spec.variant {
            Variant::TwoState => utilities.progressed,
            Variant::ThreeState => usd_utility(
                stay,
                p_sp,
                p_sd,
                utilities.surviving,
                utilities.progressed,
                utilities.other_causes,
            )?,
        };
        let f = disc.factor(cycle);
        tr.discount.push(f);
        tr.qaly
            .push((s * u_stable + p * utilities.progressed) * years_per_cycle * f);

        let progressions = s * p_sp;
        let deaths = s * p_sd + p * p_pd;
        s -= progressions + s * p_sd;
        p += progressions - p * p_pd;
        d += deaths;
        tr.new_progressions.push(progressions);
        tr.new_deaths.push(deaths);
        tr.stable.push(s);
        tr.progressed.push(p);
        tr.dead.push(d);
    }
    Ok(tr)
}

/// Discounted cohort costs in GBP.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub drug: f64,
    /// Follow-up charged on progression (three-state only).
    pub follow_up_stable: f64,
    /// Follow-up charged on death.
    pub follow_up_progressed: f64,
    pub terminal_care: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.drug + self.follow_up_stable + self.follow_up_progressed + self.terminal_care
    }
}

/// Costs for a trace. Drug is paid per person-cycle in stable disease,
/// stopping after `mean_cycles` cycles when that is set (a fractional
/// last cycle pays pro rata); one-off follow-up
/// and terminal-care costs are charged in the cycle of the triggering
/// event at that cycle's discount factor. In the three-state model a share
/// `1 - division_factor` of follow-up is charged on progression and the
/// rest on death; in the two-state model all of it on death.
pub fn accrue_costs(trace: &CohortTrace, draw: &ParameterDraw) -> CostBreakdown {
    let mut c = CostBreakdown::default();
    let psi = match trace.variant {
        Variant::TwoState => 1.0,
        Variant::ThreeState => draw.division_factor,
    };
    for i in 0..trace.cycles() {
        let f = trace.discount[i];
        let on_drug = match draw.mean_cycles {
            Some(m) => (m - i as f64).clamp(0.0, 1.0),
            None => 1.0,
        };
        c.drug += draw.drug_cost_per_cycle * trace.stable[i] * on_drug * f;
        c.follow_up_stable += (1.0 - psi) * draw.follow_up_cost * trace.new_progressions[i] * f;
        c.follow_up_progressed += psi * draw.follow_up_cost * trace.new_deaths[i] * f;
        c.terminal_care += draw.terminal_care_cost * trace.new_deaths[i] * f;
    }
    c
}
