use evsyn::econ::{
    ce_plane, ceac, ceac_svg, icer, net_benefit, net_benefit_summary, plane_svg, threshold_grid,
    write_plane, CeResult, Icer, Quadrant,
};
use evsyn::markov::PsaSample;
use proptest::prelude::*;

fn s(draw: usize, label: &str, cost: f64, qaly: f64) -> PsaSample {
    PsaSample {
        draw,
        intervention: label.into(),
        cost,
        qaly,
    }
}

#[test]
fn icer_table_value() {
    let i = Icer::from_increments("D+P", "M+P", 4624.0, 0.154);
    assert!((i.value.unwrap() - 30_026.0).abs() < 1.0);
    assert_eq!(i.quadrant, Quadrant::NorthEast);
}

#[test]
fn icer_edges() {
    let zero_cost = Icer::from_increments("a", "b", 0.0, 0.2);
    assert_eq!(zero_cost.value, Some(0.0));
    let none = Icer::from_increments("a", "b", 100.0, 0.0);
    assert_eq!(none.value, None);
    assert_eq!(none.quadrant, Quadrant::Undefined);
    assert!(none.to_string().contains("undefined"));
    let dom = Icer::from_increments("a", "b", -50.0, 0.1);
    assert_eq!(dom.quadrant, Quadrant::Dominant);
    assert!(dom.to_string().ends_with("dominant"));
    assert_eq!(
        Icer::from_increments("a", "b", 50.0, -0.1).quadrant,
        Quadrant::Dominated
    );
    assert_eq!(
        Icer::from_increments("a", "b", -50.0, -0.1).quadrant,
        Quadrant::SouthWest
    );
}

#[test]
fn icer_from_samples_uses_means() {
    let xs = vec![
        s(0, "A", 100.0, 1.0),
        s(0, "B", 300.0, 1.1),
        s(1, "A", 200.0, 1.0),
        s(1, "B", 200.0, 1.3),
    ];
    let i = icer(&xs, "B", "A").unwrap();
    assert!((i.d_cost - 100.0).abs() < 1e-12);
    assert!((i.d_qaly - 0.2).abs() < 1e-12);
    assert!((i.value.unwrap() - 500.0).abs() < 1e-9);
    assert!(matches!(
        icer(&xs, "B", "C"),
        Err(evsyn::Error::LabelMismatch(_))
    ));
}

#[test]
fn net_benefit_values() {
    assert_eq!(net_benefit(11_772.0, 0.809, 0.0), -11_772.0);
    let nb = net_benefit(11_772.0, 0.809, 20_000.0);
    assert!((nb - 4408.0).abs() < 1e-9);
    assert!((nb - 4417.0).abs() <= 20.0);
    let q20 = net_benefit(0.0, 0.809, 20_000.0);
    assert_eq!(net_benefit(0.0, 0.809, 40_000.0), 2.0 * q20);
}

#[test]
fn net_benefit_interval() {
    let xs: Vec<PsaSample> = (0..1000)
        .map(|d| s(d, "A", 1000.0 + d as f64, 1.0))
        .collect();
    let nb = net_benefit_summary(&xs, "A", 2000.0).unwrap();
    assert!((nb.summary.mean - (1000.0 - 499.5)).abs() < 1e-9);
    assert!(nb.summary.lower < nb.summary.mean && nb.summary.mean < nb.summary.upper);
    assert!(net_benefit_summary(&xs, "A", -1.0).is_err());
}

#[test]
fn ceac_dominant_and_ties() {
    let mut xs = vec![];
    for d in 0..10 {
        xs.push(s(d, "A", 10.0, 1.0));
        xs.push(s(d, "B", 20.0, 0.5));
        xs.push(s(d, "C", 20.0, 0.5));
    }
    let c = ceac(&xs, &[0.0, 1e4, 1e5]).unwrap();
    for p in &c.probability {
        assert_eq!(p, &vec![1.0, 0.0, 0.0]);
    }
    let same: Vec<PsaSample> = (0..10)
        .flat_map(|d| ["A", "B", "C"].map(|l| s(d, l, 5.0, 1.0)))
        .collect();
    let c = ceac(&same, &[0.0, 5.0]).unwrap();
    for p in &c.probability {
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
    }
}

#[test]
fn ceac_step_at_crossing() {
    // B costs 1000 more and gains 0.1 QALY: better above 10,000/QALY
    let mut xs = vec![];
    for d in 0..20 {
        let jitter = d as f64;
        xs.push(s(d, "A", 5000.0 + jitter, 1.0));
        xs.push(s(d, "B", 6000.0 + jitter, 1.1));
    }
    let grid = threshold_grid(0.0, 20_000.0, 500.0).unwrap();
    let c = ceac(&xs, &grid).unwrap();
    for (w, p) in grid.iter().zip(&c.probability) {
        let want_b = match w.partial_cmp(&10_000.0).unwrap() {
            std::cmp::Ordering::Less => 0.0,
            std::cmp::Ordering::Equal => 0.5,
            std::cmp::Ordering::Greater => 1.0,
        };
        assert!((p[1] - want_b).abs() < 1e-9, "at {w}: {p:?}");
    }
}

#[test]
fn ceac_errors() {
    let xs = vec![s(0, "A", 1.0, 1.0), s(0, "B", 1.0, 1.0)];
    assert!(ceac(&xs, &[]).is_err());
    assert!(ceac(&xs[..1], &[1.0]).is_err());
    assert!(ceac(
        &[
            s(0, "A", 1.0, 1.0),
            s(0, "B", 1.0, 1.0),
            s(1, "A", 1.0, 1.0)
        ],
        &[1.0]
    )
    .is_err());
    assert!(threshold_grid(10.0, 0.0, 1.0).is_err());
}

#[test]
fn grid_rows() {
    let g = threshold_grid(0.0, 100_000.0, 500.0).unwrap();
    assert_eq!(g.len(), 201);
    let xs: Vec<PsaSample> = (0..3)
        .flat_map(|d| [s(d, "A", 1.0, 1.0), s(d, "B", 2.0, 1.1)])
        .collect();
    let c = ceac(&xs, &g).unwrap();
    assert_eq!(c.rows().len(), 402);
    assert_eq!(
        c.rows().iter().filter(|r| r.intervention == "B").count(),
        201
    );
}

#[test]
fn plane_cases() {
    let xs: Vec<PsaSample> = (0..50)
        .flat_map(|d| {
            [
                s(d, "A", 100.0 + d as f64, 1.0),
                s(d, "B", 150.0, 1.0 + 0.01 * (d + 1) as f64),
            ]
        })
        .collect();
    let origin = ce_plane(&xs, "A", "A").unwrap();
    assert!(origin.iter().all(|p| p.d_qaly == 0.0 && p.d_cost == 0.0));
    let pts = ce_plane(&xs, "B", "A").unwrap();
    assert!(pts.iter().all(|p| p.d_qaly > 0.0));
    assert!(pts.windows(2).all(|w| w[0].draw < w[1].draw));
    let neg: Vec<PsaSample> = xs
        .iter()
        .map(|x| s(x.draw, &x.intervention, -x.cost, x.qaly))
        .collect();
    let flipped = ce_plane(&neg, "B", "A").unwrap();
    for (p, q) in pts.iter().zip(&flipped) {
        assert_eq!(p.d_qaly, q.d_qaly);
        assert_eq!(p.d_cost, -q.d_cost);
    }
    assert!(ce_plane(&xs, "B", "Z").is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plane.csv");
    write_plane(&path, &pts).unwrap();
    assert_eq!(
        std::fs::read_to_string(&path)
            .unwrap()
            .lines()
            .next()
            .unwrap(),
        "draw,d_qaly,d_cost"
    );
    let svg = plane_svg(&pts, "B vs A", Some(20_000.0));
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<circle").count(), 50);
}

#[test]
fn summary_consistency() {
    let xs: Vec<PsaSample> = (0..200)
        .flat_map(|d| {
            let e = (d as f64 * 0.37).sin();
            [
                s(d, "M", 9000.0 + 500.0 * e, 0.80),
                s(d, "D", 13_000.0 - 300.0 * e, 0.95 + 0.02 * e),
            ]
        })
        .collect();
    let r = CeResult::new(&xs, &[20_000.0, 30_000.0]).unwrap();
    assert_eq!(r.increments.len(), 1);
    assert_eq!(r.increments[0].new, "D");
    let ceac_svg_text = ceac_svg(&ceac(&xs, &r.thresholds).unwrap());
    assert_eq!(ceac_svg_text.matches("<polyline").count(), 2);
    for (i, &w) in r.thresholds.iter().enumerate() {
        let mean_nb = |l: &str| {
            let o = r.intervention(l).unwrap();
            net_benefit(o.mean_cost, o.mean_qaly, w)
        };
        let want = if mean_nb("M") > mean_nb("D") {
            "M"
        } else {
            "D"
        };
        assert_eq!(r.best_at(i), want);
        let total: f64 = r.interventions.iter().map(|o| o.probability[i]).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn ceac_sums_to_one_and_ignores_shifts(
        data in prop::collection::vec((0.0f64..1e4, 0.0f64..2.0, 0.0f64..1e4, 0.0f64..2.0), 1..40),
        shift in -1e4f64..1e4,
        w in 0.0f64..1e5,
    ) {
        let xs: Vec<PsaSample> = data.iter().enumerate()
            .flat_map(|(d, &(c1, q1, c2, q2))| [s(d, "A", c1, q1), s(d, "B", c2, q2)])
            .collect();
        let shifted: Vec<PsaSample> = xs.iter().map(|x| s(x.draw, &x.intervention, x.cost + shift, x.qaly)).collect();
        let a = ceac(&xs, &[w]).unwrap();
        let b = ceac(&shifted, &[w]).unwrap();
        let p = &a.probability[0];
        prop_assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // a shift can only change who wins through rounding of exact ties
        for (x, y) in p.iter().zip(&b.probability[0]) {
            prop_assert!((x - y).abs() <= 1.0 / data.len() as f64 + 1e-12);
        }
    }
}
