use evsyn::stats::RandomStream;
use evsyn::survival::{cox_fit, km_estimate, km_fit, reconstruct_ipd, IpdRecord};
use rand::Rng;

fn synthetic_arm(rng: &mut RandomStream, n: usize, arm: &str) -> Vec<IpdRecord> {
    let lambda = rng.random_range(0.01..0.2);
    let gamma = rng.random_range(0.6..2.0);
    let follow_up = rng.random_range(12.0..60.0);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let t = (-(1.0 - u).ln() / lambda).powf(1.0 / gamma);
            // uniform accrual gives each patient a different censoring time
            let c = follow_up * rng.random_range(0.3..1.0);
            if t <= c {
                IpdRecord::new(t, true, arm)
            } else {
                IpdRecord::new(c, false, arm)
            }
        })
        .collect()
}

fn grid(data: &[IpdRecord], width: f64) -> Vec<f64> {
    let max = data.iter().map(|r| r.time).fold(0.0, f64::max);
    (0..)
        .map(|k| k as f64 * width)
        .take_while(|&g| g <= max)
        .collect()
}

fn round_trip(data: &[IpdRecord], with_total: bool) -> f64 {
    let g = grid(data, 3.0);
    let curve = km_estimate(data, &g).unwrap();
    let total = with_total.then(|| data.iter().filter(|r| r.event).count());
    let ipd = reconstruct_ipd(&curve, total, "A").unwrap();
    assert_eq!(ipd.len(), data.len());
    let fit = km_fit(&ipd).unwrap();
    for &(t, n) in &curve.risk_table {
        assert_eq!(fit.at_risk(t), n, "risk table at t={t}");
    }
    if let Some(total) = total {
        assert_eq!(ipd.iter().filter(|r| r.event).count(), total);
    }
    curve
        .steps
        .iter()
        .map(|&(t, s)| (fit.survival_at(t) - s).abs())
        .fold(0.0, f64::max)
}

#[test]
fn reconstruction_round_trip_200_patients() {
    let mut rng = RandomStream::new(2024, 0);
    let data = synthetic_arm(&mut rng, 200, "A");
    let err = round_trip(&data, true);
    assert!(err <= 0.005, "max |ΔS| = {err}");
}

#[test]
fn reconstruction_round_trip_fuzzed() {
    let mut worst = 0.0f64;
    for case in 0..100 {
        let mut rng = RandomStream::new(77, case);
        let n = rng.random_range(30..400);
        let data = synthetic_arm(&mut rng, n, "A");
        let err = round_trip(&data, case % 2 == 0);
        assert!(err <= 0.005, "case {case}: max |ΔS| = {err}");
        worst = worst.max(err);
    }
    println!("worst round-trip deviation {worst:.5}");
}

/// Breslow partial log-likelihood computed straight from the risk sets.
fn brute_loglik(data: &[IpdRecord], b: f64) -> f64 {
    let mut times: Vec<f64> = data.iter().filter(|r| r.event).map(|r| r.time).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let x = |r: &IpdRecord| if r.arm == "B" { 1.0 } else { 0.0 };
    times
        .iter()
        .map(|&t| {
            let deaths: Vec<&IpdRecord> = data.iter().filter(|r| r.event && r.time == t).collect();
            let risk: f64 = data
                .iter()
                .filter(|r| r.time >= t)
                .map(|r| (b * x(r)).exp())
                .sum();
            deaths.iter().map(|r| b * x(r)).sum::<f64>() - deaths.len() as f64 * risk.ln()
        })
        .sum()
}

#[test]
fn cox_matches_grid_maximisation() {
    let mut checked = 0;
    let mut seed = 0;
    while checked < 20 {
        seed += 1;
        let mut rng = RandomStream::new(500, seed);
        let mut data = synthetic_arm(&mut rng, 10, "A");
        data.extend(synthetic_arm(&mut rng, 10, "B"));
        // coarse rounding creates ties so the Breslow handling is exercised
        for r in &mut data {
            r.time = (r.time * 2.0).ceil() / 2.0;
        }
        let fit = cox_fit(&data, "A").unwrap();
        if !fit.converged {
            continue;
        }
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..=60_000 {
            let b = -3.0 + i as f64 * 1e-4;
            let ll = brute_loglik(&data, b);
            if ll > best.0 {
                best = (ll, b);
            }
        }
        if best.1.abs() >= 3.0 - 1e-9 {
            continue;
        }
        assert!(
            (fit.log_hr - best.1).abs() < 2e-4,
            "seed {seed}: {} vs {}",
            fit.log_hr,
            best.1
        );
        checked += 1;
    }
}
