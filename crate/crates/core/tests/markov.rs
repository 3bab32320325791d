use evsyn::markov::{
    accrue_costs, discount_factor, read_psa, run_cohort, run_psa, write_psa, CohortTrace,
    CostRatio, InterventionSpec, ModelSpec, ParameterDraw, Transition, TransitionGen, Transitions,
    UtilityDraw, UtilitySpec, Variant,
};
use evsyn::stats::{Dist, RandomStream, Sym2};
use proptest::prelude::*;

fn fixed(p: f64) -> TransitionGen {
    TransitionGen::Fixed { p }
}

fn arm(label: &str, transitions: Transitions) -> InterventionSpec {
    InterventionSpec {
        label: label.into(),
        transitions,
        drug_cost_per_cycle: 100.0,
        mean_cycles: Some(Dist::normal(6.0, 0.2).unwrap()),
        follow_up_cost: Dist::gamma_mean_sd(3000.0, 400.0).unwrap(),
        terminal_care_cost: Dist::gamma_mean_sd(3500.0, 500.0).unwrap(),
        cost_ratio: None,
        division_factor: 0.75,
    }
}

fn two_state(p: f64) -> Transitions {
    Transitions {
        std_death: fixed(p),
        std_pd: None,
        pd_death: None,
    }
}

fn three_state_gens() -> Transitions {
    Transitions {
        std_death: fixed(0.005),
        std_pd: Some(TransitionGen::WeibullAft {
            intercept: 2.0,
            scale: 0.75,
            cov: Sym2::new(0.004, -0.001, 0.002),
        }),
        pd_death: Some(TransitionGen::ExponentialFromMean {
            mean: Dist::normal(18.2, 0.6).unwrap(),
            less: Some(Dist::normal(5.9, 0.33).unwrap()),
        }),
    }
}

fn point_utilities(u: f64) -> UtilitySpec {
    UtilitySpec {
        progressed: Dist::point(u).unwrap(),
        surviving: Dist::point(u).unwrap(),
        other_causes: Dist::point(u).unwrap(),
    }
}

fn trace_for(spec: &ModelSpec, k: usize, seed: u64) -> (ParameterDraw, CohortTrace) {
    let root = RandomStream::new(seed, 7);
    let draw = ParameterDraw::sample(spec, &spec.interventions[k], &root).unwrap();
    let u = UtilityDraw::sample(&spec.utilities, &mut root.substream(0));
    let tr = run_cohort(spec, &draw, &u).unwrap();
    (draw, tr)
}

#[test]
fn geometric_time_in_stable() {
    let spec = ModelSpec::new(Variant::TwoState, vec![arm("A", two_state(0.1))]);
    let (_, tr) = trace_for(&spec, 0, 1);
    let closed = (1.0 - 0.9f64.powi(180)) / 0.1;
    assert!((tr.time_stable() - closed).abs() < 1e-9);
    assert!((tr.time_stable() / 10.0 - 1.0).abs() < 0.01);
}

#[test]
fn nobody_moves_all_qaly_discounted() {
    let mut spec = ModelSpec::new(Variant::TwoState, vec![arm("A", two_state(0.0))]);
    spec.utilities = point_utilities(0.6);
    let (draw, tr) = trace_for(&spec, 0, 2);
    assert!(tr.stable.iter().all(|&s| s == 10_000.0));
    let want: f64 = (1..=180)
        .map(|c| 0.6 / 12.0 * discount_factor(c).unwrap())
        .sum();
    assert!((tr.qaly_per_patient() - want).abs() < 1e-12);
    let c = accrue_costs(&tr, &draw);
    assert_eq!(
        c.follow_up_stable + c.follow_up_progressed + c.terminal_care,
        0.0
    );
}

#[test]
fn stable_plus_progressed_is_alive() {
    let spec = ModelSpec::new(Variant::ThreeState, vec![arm("A", three_state_gens())]);
    for seed in 0..50 {
        let (_, tr) = trace_for(&spec, 0, seed);
        let (s, p, a) = (tr.time_stable(), tr.time_progressed(), tr.time_alive());
        assert!((s + p - a).abs() <= 1e-12 * a, "{s} + {p} != {a}");
    }
}

#[test]
fn discounting_lowers_totals() {
    let mut spec = ModelSpec::new(Variant::ThreeState, vec![arm("A", three_state_gens())]);
    let (draw, tr) = trace_for(&spec, 0, 3);
    spec.annual_discount_rate = 0.0;
    let (_, flat) = trace_for(&spec, 0, 3);
    assert!(tr.qaly_per_patient() < flat.qaly_per_patient());
    assert!(accrue_costs(&tr, &draw).total() < accrue_costs(&flat, &draw).total());
}

fn counted_trace(progressions: f64, deaths: f64) -> CohortTrace {
    CohortTrace {
        variant: Variant::ThreeState,
        cohort_size: 1000.0,
        cycle_length: 1.0,
        stable: vec![1000.0, 900.0],
        progressed: vec![0.0, 100.0 - deaths],
        dead: vec![0.0, deaths],
        new_progressions: vec![progressions],
        new_deaths: vec![deaths],
        discount: vec![1.0],
        qaly: vec![0.0],
    }
}

fn cost_draw(psi: f64) -> ParameterDraw {
    ParameterDraw {
        std_death: Transition::Constant(0.0),
        std_pd: None,
        pd_death: None,
        drug_cost_per_cycle: 0.0,
        mean_cycles: None,
        follow_up_cost: 1000.0,
        terminal_care_cost: 0.0,
        division_factor: psi,
        rejections: 0,
    }
}

#[test]
fn follow_up_split() {
    let c = accrue_costs(&counted_trace(100.0, 80.0), &cost_draw(0.75));
    assert!((c.follow_up_stable - 25_000.0).abs() < 1e-9);
    assert!((c.follow_up_progressed - 60_000.0).abs() < 1e-9);

    let all_on_death = accrue_costs(&counted_trace(100.0, 80.0), &cost_draw(1.0));
    assert_eq!(all_on_death.follow_up_stable, 0.0);
    assert!((all_on_death.follow_up_progressed - 80_000.0).abs() < 1e-9);

    let none = accrue_costs(&counted_trace(0.0, 0.0), &cost_draw(0.75));
    assert_eq!(none.follow_up_stable + none.follow_up_progressed, 0.0);
}

#[test]
fn drug_stops_after_mean_cycles() {
    let spec = ModelSpec::new(Variant::TwoState, vec![arm("A", two_state(0.0))]);
    let (mut draw, tr) = trace_for(&spec, 0, 4);
    draw.mean_cycles = Some(5.5);
    // nobody leaves, all of cycles 1..=12 undiscounted
    let c = accrue_costs(&tr, &draw);
    assert!((c.drug - 5.5 * 100.0 * 10_000.0).abs() < 1e-6);
}

#[test]
fn identical_arms_have_zero_increments() {
    let a = arm("A", three_state_gens());
    let mut b = a.clone();
    b.label = "B".into();
    let spec = ModelSpec::new(Variant::ThreeState, vec![a, b]);
    let res = run_psa(&spec, 200, 11, Some(2)).unwrap();
    for pair in res.samples.chunks(2) {
        assert_eq!(pair[0].cost, pair[1].cost);
        assert_eq!(pair[0].qaly, pair[1].qaly);
    }
}

#[test]
fn hazard_scaled_arm_reuses_baseline_draw() {
    let base = three_state_gens();
    let mut scaled = base.clone();
    scaled.std_pd = Some(TransitionGen::HazardScaled {
        base: Box::new(base.std_pd.clone().unwrap()),
        log_hr: Dist::point(0.0).unwrap(),
    });
    let spec = ModelSpec::new(Variant::ThreeState, vec![arm("A", base), arm("B", scaled)]);
    let res = run_psa(&spec, 50, 5, None).unwrap();
    for pair in res.samples.chunks(2) {
        assert!((pair[0].qaly - pair[1].qaly).abs() < 1e-12);
    }
}

#[test]
fn cost_ratio_scales_the_same_draw() {
    let a = arm("A", two_state(0.05));
    let mut b = a.clone();
    b.label = "B".into();
    b.cost_ratio = Some(CostRatio {
        numerator: Dist::point(1.0).unwrap(),
        denominator: Dist::point(2.0).unwrap(),
    });
    let spec = ModelSpec::new(Variant::TwoState, vec![a, b]);
    let res = run_psa(&spec, 20, 8, None).unwrap();
    for pair in res.details.chunks(2) {
        let (x, y) = (pair[0].costs, pair[1].costs);
        assert!((x.terminal_care - 2.0 * y.terminal_care).abs() < 1e-9 * x.terminal_care);
        assert!(
            (x.follow_up_progressed - 2.0 * y.follow_up_progressed).abs()
                < 1e-9 * x.follow_up_progressed
        );
    }
}

#[test]
fn degenerate_psa_is_constant() {
    let mut a = arm("A", two_state(0.03));
    a.mean_cycles = Some(Dist::point(6.0).unwrap());
    a.follow_up_cost = Dist::point(2000.0).unwrap();
    a.terminal_care_cost = Dist::point(3000.0).unwrap();
    let mut spec = ModelSpec::new(Variant::TwoState, vec![a]);
    spec.utilities = point_utilities(0.55);
    let res = run_psa(&spec, 100, 3, None).unwrap();
    assert!(res
        .samples
        .iter()
        .all(|s| s.cost == res.samples[0].cost && s.qaly == res.samples[0].qaly));
}

#[test]
fn workers_do_not_change_results() {
    let spec = ModelSpec::new(
        Variant::ThreeState,
        vec![arm("A", three_state_gens()), arm("B", three_state_gens())],
    );
    let one = run_psa(&spec, 300, 42, Some(1)).unwrap();
    let four = run_psa(&spec, 300, 42, Some(4)).unwrap();
    let pool = run_psa(&spec, 300, 42, None).unwrap();
    assert_eq!(one.samples, four.samples);
    assert_eq!(one.samples, pool.samples);
    let other = run_psa(&spec, 300, 43, Some(4)).unwrap();
    assert_ne!(one.samples, other.samples);
}

#[test]
fn psa_failures_are_aggregated() {
    let gens = Transitions {
        std_death: fixed(0.6),
        std_pd: Some(fixed(0.6)),
        pd_death: Some(fixed(0.1)),
    };
    let spec = ModelSpec::new(Variant::ThreeState, vec![arm("A", gens)]);
    let err = run_psa(&spec, 10, 1, None).unwrap_err();
    assert!(
        matches!(err, evsyn::Error::PsaDraws { count: 10, .. }),
        "{err}"
    );
}

#[test]
fn spec_json_round_trip() {
    let spec = ModelSpec::new(
        Variant::ThreeState,
        vec![arm("A", three_state_gens()), arm("B", three_state_gens())],
    );
    let back = ModelSpec::from_json(&spec.to_json()).unwrap();
    assert_eq!(back, spec);
    let minimal = r#"{"variant": "two_state", "interventions": [{
        "label": "P", "transitions": {"std_death": {"kind": "fixed", "p": 0.02}},
        "drug_cost_per_cycle": 1.48,
        "follow_up_cost": {"gamma": {"shape": 4.0, "rate": 0.002}},
        "terminal_care_cost": {"point": {"value": 3000.0}}}]}"#;
    let m = ModelSpec::from_json(minimal).unwrap();
    assert_eq!(m.cycles, 180);
    assert_eq!(m.interventions[0].division_factor, 0.75);
}

#[test]
fn spec_validation() {
    let mut spec = ModelSpec::new(Variant::ThreeState, vec![arm("A", two_state(0.1))]);
    assert!(spec.validate().is_err());
    spec.variant = Variant::TwoState;
    spec.validate().unwrap();
    spec.interventions.push(arm("A", two_state(0.2)));
    assert!(spec.validate().is_err());
}

#[test]
fn psa_csv_round_trip() {
    let spec = ModelSpec::new(
        Variant::TwoState,
        vec![arm("A", two_state(0.05)), arm("B", two_state(0.04))],
    );
    let res = run_psa(&spec, 5, 1, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("psa.csv");
    write_psa(&path, &res.samples).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "draw,intervention,cost,qaly");
    assert_eq!(read_psa(&path).unwrap(), res.samples);
}

#[test]
fn default_utility_means() {
    let u = UtilityDraw::mean(&UtilitySpec::default());
    assert!((u.progressed - 0.538).abs() < 5e-4);
    assert!((u.surviving - 0.770).abs() < 5e-4);
    assert!((u.other_causes - 0.564).abs() < 5e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conservation_and_monotone_deaths(
        intercept in 1.0f64..3.5,
        scale in 0.4f64..1.5,
        log_hr in -1.0f64..1.0,
        p_sd in 0.0f64..0.05,
        seed in 0u64..1000,
    ) {
        let base = TransitionGen::WeibullAft { intercept, scale, cov: Sym2::new(0.01, 0.0, 0.005) };
        let gens = Transitions {
            std_death: fixed(p_sd),
            std_pd: Some(TransitionGen::HazardScaled { base: Box::new(base), log_hr: Dist::normal(log_hr, 0.1).unwrap() }),
            pd_death: Some(TransitionGen::ExponentialFromMean { mean: Dist::normal(30.0, 1.0).unwrap(), less: None }),
        };
        let spec = ModelSpec::new(Variant::ThreeState, vec![arm("A", gens)]);
        let root = RandomStream::new(seed, 9);
        let draw = ParameterDraw::sample(&spec, &spec.interventions[0], &root).unwrap();
        let Ok(tr) = run_cohort(&spec, &draw, &UtilityDraw::mean(&spec.utilities)) else {
            // Weibull probabilities plus p_sd may exceed 1 late in the horizon
            return Ok(());
        };
        let mut progressed = 0.0;
        for i in 0..tr.stable.len() {
            prop_assert!((tr.stable[i] + tr.progressed[i] + tr.dead[i] - 10_000.0).abs() < 1e-6);
            if i > 0 {
                prop_assert!(tr.dead[i] >= tr.dead[i - 1]);
                prop_assert!(tr.new_progressions[i - 1] >= 0.0);
                progressed += tr.new_progressions[i - 1];
            }
        }
        prop_assert!(progressed <= 10_000.0 + 1e-6);
    }
}
