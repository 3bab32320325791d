//! Inversion of a published Kaplan-Meier curve back to patient-level data.
//!
//! The risk table splits follow-up into intervals `[t_k, t_{k+1})`. Inside
//! interval `k` exactly `n_k - n_{k+1}` patients leave the risk set, split
//! between events (placed at the curve's drop times) and censorings (spread
//! evenly over the interval). For each possible censoring count we allocate
//! events to drops greedily against the *reconstructed* survival, so that
//! rounding error made at one drop is corrected at the next, then nudge the
//! allocation to the required event total. The censoring count whose
//! reconstruction tracks the digitised curve most closely wins. Intervals
//! where no evenly spread censoring pattern stays within tolerance fall back
//! to inferring the censoring between consecutive drops from the drop sizes.

use super::km::{IpdRecord, KmCurve};
use crate::error::{Error, Result};

/// Maximum tolerated absolute survival deviation at any digitised step.
pub const TOLERANCE: f64 = 0.005;

/// Beyond this gap between the greedy event total and the required one, a
/// censoring count is not worth adjusting for.
const MAX_NUDGE: usize = 6;

struct Interval<'a> {
    steps: &'a [(f64, f64)],
    n_start: usize,
    s_start: f64,
}

impl Interval<'_> {
    /// Survival path for a given allocation; `None` if more patients would
    /// leave than are at risk.
    fn evaluate(&self, d: &[usize], censors: &[f64]) -> Option<(f64, f64)> {
        let mut s = self.s_start;
        let mut gone = 0usize;
        let mut ci = 0usize;
        let mut err = 0.0f64;
        for (j, &(t, target)) in self.steps.iter().enumerate() {
            while ci < censors.len() && censors[ci] < t {
                ci += 1;
            }
            let n = self.n_start.checked_sub(gone + ci)?;
            if d[j] > n {
                return None;
            }
            if d[j] > 0 {
                s *= 1.0 - d[j] as f64 / n as f64;
            }
            gone += d[j];
            err = err.max((s - target).abs());
        }
        if gone + censors.len() > self.n_start {
            return None;
        }
        Some((err, s))
    }

    fn greedy(&self, censors: &[f64]) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.steps.len());
        let mut s = self.s_start;
        let mut gone = 0usize;
        let mut ci = 0usize;
        for &(t, target) in self.steps {
            while ci < censors.len() && censors[ci] < t {
                ci += 1;
            }
            let n = self.n_start.saturating_sub(gone + ci);
            let dj = if n == 0 || s <= 0.0 {
                0
            } else {
                ((n as f64) * (1.0 - target / s))
                    .round()
                    .clamp(0.0, n as f64) as usize
            };
            if dj > 0 {
                s *= 1.0 - dj as f64 / n as f64;
            }
            gone += dj;
            d.push(dj);
        }
        d
    }

    /// Fallback allocation for when evenly spread censoring cannot track the
    /// curve (small risk sets, where one misplaced censoring shifts every
    /// later drop). A dynamic programme over (drop, patients still at risk)
    /// chooses how many censorings fall in each gap between drops and how
    /// many events occur at each drop, minimising the worst survival
    /// deviation; paths that leave the tolerance are dropped. `floor` is the
    /// number that must still be at risk at the interval end. One allocation is returned per reachable final risk
    /// set size as `(events per drop, censorings per gap, remainder)`, where
    /// the remainder leaves after the last drop. Equally good paths are
    /// resolved towards fewer censorings, or more with `more_censoring`.
    fn allocate_dp(
        &self,
        floor: usize,
        more_censoring: bool,
    ) -> Vec<(Vec<usize>, Vec<usize>, usize)> {
        #[derive(Clone, Copy)]
        struct Node {
            err: f64,
            s: f64,
            censored: usize,
            parent: usize,
            c: usize,
            d: usize,
        }
        let n0 = self.n_start;
        if n0 < floor {
            return vec![];
        }
        let mut layers: Vec<Vec<Option<Node>>> = Vec::with_capacity(self.steps.len() + 1);
        let mut init = vec![None; n0 + 1];
        init[n0] = Some(Node {
            err: 0.0,
            s: self.s_start,
            censored: 0,
            parent: n0,
            c: 0,
            d: 0,
        });
        layers.push(init);
        for &(_, target) in self.steps {
            let prev = layers.last().expect("initial layer");
            let mut next: Vec<Option<Node>> = vec![None; n0 + 1];
            for (n, node) in prev.iter().enumerate() {
                let Some(node) = node else { continue };
                for c in 0..=(n - floor) {
                    let at_risk = n - c;
                    let room = at_risk - floor;
                    let x = if at_risk == 0 || node.s <= 0.0 {
                        0.0
                    } else {
                        at_risk as f64 * (1.0 - target / node.s)
                    };
                    let lo = (x.floor().max(0.0) as usize).min(room);
                    let hi = (x.ceil().max(0.0) as usize).min(room);
                    for d in [lo, hi] {
                        let s = if d == 0 {
                            node.s
                        } else {
                            node.s * (1.0 - d as f64 / at_risk as f64)
                        };
                        let err = node.err.max((s - target).abs());
                        if err > TOLERANCE {
                            continue;
                        }
                        let cand = Node {
                            err,
                            s,
                            censored: node.censored + c,
                            parent: n,
                            c,
                            d,
                        };
                        let slot = &mut next[at_risk - d];
                        let replace = match slot {
                            None => true,
                            Some(cur) => {
                                let key = |v: &Node| {
                                    let cens = if more_censoring {
                                        n0 - v.censored
                                    } else {
                                        v.censored
                                    };
                                    ((v.err * 1e9).round(), cens, (v.s - target).abs())
                                };
                                let (a, b) = (key(&cand), key(cur));
                                a.0 < b.0
                                    || (a.0 == b.0 && (a.1 < b.1 || (a.1 == b.1 && a.2 < b.2)))
                            }
                        };
                        if replace {
                            *slot = Some(cand);
                        }
                    }
                }
            }
            layers.push(next);
        }
        let last = layers.last().expect("layers");
        let mut out = vec![];
        for (n_final, node) in last.iter().enumerate() {
            if node.is_none() {
                continue;
            }
            let m = self.steps.len();
            let mut d = vec![0; m];
            let mut c = vec![0; m];
            let mut n = n_final;
            for j in (0..m).rev() {
                let node = layers[j + 1][n].expect("path node");
                d[j] = node.d;
                c[j] = node.c;
                n = node.parent;
            }
            out.push((d, c, n_final - floor));
        }
        out
    }

    /// Move the allocation one event at a time towards `total`, each time
    /// choosing the drop where the change hurts least.
    fn nudge(
        &self,
        mut d: Vec<usize>,
        censors: &[f64],
        total: usize,
    ) -> Option<(Vec<usize>, f64, f64)> {
        loop {
            let sum: usize = d.iter().sum();
            if sum == total {
                let (err, s) = self.evaluate(&d, censors)?;
                return Some((d, err, s));
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..d.len() {
                if sum > total && d[j] == 0 {
                    continue;
                }
                let old = d[j];
                d[j] = if sum < total { old + 1 } else { old - 1 };
                if let Some((err, _)) = self.evaluate(&d, censors) {
                    if best.is_none_or(|(_, e)| err < e) {
                        best = Some((j, err));
                    }
                }
                d[j] = old;
            }
            let (j, _) = best?;
            if sum < total {
                d[j] += 1;
            } else {
                d[j] -= 1;
            }
        }
    }
}

fn spread(start: f64, end: f64, c: usize) -> Vec<f64> {
    let w = end - start;
    (0..c)
        .map(|i| start + (i + 1) as f64 * w / (c + 1) as f64)
        .collect()
}

struct Candidate {
    /// Censorings evenly spread over the whole interval.
    uniform: bool,
    c: usize,
    d: Vec<usize>,
    censors: Vec<f64>,
    err: f64,
    s_end: f64,
}

/// Evenly spread censoring is preferred whenever it fits within this
/// margin of the best allocation found.
const UNIFORM_MARGIN: f64 = 0.1 * TOLERANCE;

fn better(a: &Candidate, b: &Candidate, expected_c: f64, best_err: f64) -> bool {
    let ok = |c: &Candidate| c.uniform && c.err <= best_err + UNIFORM_MARGIN;
    if ok(a) != ok(b) {
        return ok(a);
    }
    if (a.err - b.err).abs() > 1e-9 {
        return a.err < b.err;
    }
    (a.c as f64 - expected_c).abs() < (b.c as f64 - expected_c).abs()
}

/// Outcome of one pass over the intervals.
enum Pass {
    Done(Vec<IpdRecord>),
    /// The event total cannot be met in the final interval; `shift` is how
    /// many more (or fewer) events earlier intervals should absorb, given
    /// the per-interval event counts of this pass.
    Shift(i64, Vec<i64>, Error),
}

/// Reconstruct patient-level records for one arm.
///
/// With `total_events` the reconstructed event count matches it exactly:
/// the final interval absorbs the difference when it can, otherwise a
/// second pass moves the surplus or shortfall into earlier intervals,
/// choosing only allocations that still track the curve within tolerance.
/// Without it the final interval's events follow the curve and everyone
/// left is censored at the last observed time.
pub fn reconstruct_ipd(
    curve: &KmCurve,
    total_events: Option<usize>,
    arm: &str,
) -> Result<Vec<IpdRecord>> {
    curve.validate()?;
    let risk = &curve.risk_table;
    if risk.is_empty() {
        return Err(Error::input(
            "reconstruction needs at least one risk-table entry",
        ));
    }
    if let Some(&(t, _)) = curve.steps.first() {
        if t < risk[0].0 {
            return Err(Error::input(format!(
                "curve drops at t={t} before the risk table starts at t={}",
                risk[0].0
            )));
        }
    }
    let out = match run_pass(curve, total_events, arm, None)? {
        Pass::Done(out) => out,
        Pass::Shift(shift, counts, err) => {
            match run_pass(curve, total_events, arm, Some((&counts, shift)))? {
                Pass::Done(out) => out,
                Pass::Shift(..) => return Err(err),
            }
        }
    };
    if out.iter().any(|r| r.time <= 0.0) {
        return Err(Error::input(
            "reconstruction produced a record at time 0; the risk table must extend past t=0",
        ));
    }
    Ok(out)
}

/// `plan` carries the previous pass's per-interval event counts and the
/// number of events to move into the non-final intervals.
fn run_pass(
    curve: &KmCurve,
    total_events: Option<usize>,
    arm: &str,
    plan: Option<(&[i64], i64)>,
) -> Result<Pass> {
    let mut shift = plan.map_or(0, |p| p.1);
    let mut counts = Vec::with_capacity(curve.risk_table.len());
    let risk = &curve.risk_table;
    let mut out = Vec::with_capacity(risk[0].1);
    let mut s = 1.0;
    let mut events_so_far = 0usize;
    // censoring per unit time per patient at risk, from the previous interval
    let mut prev_rate = 0.0;
    let last_step_time = curve.steps.last().map_or(0.0, |p| p.0);

    for k in 0..risk.len() {
        let (start, n_k) = risk[k];
        let is_last = k + 1 == risk.len();
        let end = if is_last {
            last_step_time.max(start)
        } else {
            risk[k + 1].0
        };
        let lo = curve.steps.partition_point(|p| p.0 < start);
        let hi = if is_last {
            curve.steps.len()
        } else {
            curve.steps.partition_point(|p| p.0 < end)
        };
        let iv = Interval {
            steps: &curve.steps[lo..hi],
            n_start: n_k,
            s_start: s,
        };
        let fail = |reason: String| Error::Reconstruction {
            interval: k,
            start,
            reason,
        };

        let mut cands: Vec<Candidate> = vec![];
        let mut fixed_events: Option<usize> = None;
        let budget = if is_last {
            n_k
        } else {
            n_k.checked_sub(risk[k + 1].1)
                .ok_or_else(|| fail("numbers at risk increase".into()))?
        };

        if !is_last {
            let mut tried = false;
            for pass in 0..2 {
                for c in 0..=budget {
                    let censors = spread(start, end, c);
                    let d = iv.greedy(&censors);
                    let sum: usize = d.iter().sum();
                    let target = budget - c;
                    if pass == 0 && sum.abs_diff(target) > MAX_NUDGE {
                        continue;
                    }
                    tried = true;
                    if let Some((d, err, s_end)) = iv.nudge(d, &censors, target) {
                        cands.push(Candidate {
                            uniform: true,
                            c,
                            d,
                            censors,
                            err,
                            s_end,
                        });
                    }
                }
                if tried {
                    break;
                }
            }
        } else if let Some(total) = total_events {
            let natural = {
                let d = iv.greedy(&[]);
                d.iter().sum::<usize>() as i64
            };
            match total.checked_sub(events_so_far).filter(|&d| d <= n_k) {
                Some(d) => fixed_events = Some(d),
                None => {
                    let err = fail(format!(
                        "total of {total} events is incompatible with {events_so_far} events already \
                         placed and {n_k} patients remaining"
                    ));
                    return Ok(Pass::Shift(
                        total as i64 - events_so_far as i64 - natural,
                        counts,
                        err,
                    ));
                }
            }
        }
        if is_last {
            for c in 0..=n_k {
                let censors = spread(start, end, c);
                let d = iv.greedy(&censors);
                let allocated = match fixed_events {
                    Some(target) if target + c <= n_k => iv.nudge(d, &censors, target),
                    Some(_) => None,
                    None => iv.evaluate(&d, &censors).map(|(err, s)| (d, err, s)),
                };
                if let Some((d, err, s_end)) = allocated {
                    cands.push(Candidate {
                        uniform: true,
                        c,
                        d,
                        censors,
                        err,
                        s_end,
                    });
                }
            }
        }

        let floor = if is_last { 0 } else { risk[k + 1].1 };
        let mut seen = std::collections::HashSet::new();
        for (d, gaps, remainder) in [false, true]
            .into_iter()
            .flat_map(|more| iv.allocate_dp(floor, more))
            .filter(|a| seen.insert(a.clone()))
        {
            let mut censors = vec![];
            let mut prev_t = start;
            for (&(t, _), &cj) in iv.steps.iter().zip(&gaps) {
                censors.extend(spread(prev_t, t, cj));
                prev_t = t;
            }
            if !is_last {
                censors.extend(spread(prev_t, end, remainder));
            }
            let placed: usize = d.iter().sum();
            let target = fixed_events.unwrap_or(placed);
            let c = censors.len();
            if target + c <= n_k {
                if let Some((d, err, s_end)) = iv.nudge(d, &censors, target) {
                    cands.push(Candidate {
                        uniform: false,
                        c,
                        d,
                        censors,
                        err,
                        s_end,
                    });
                }
            }
        }

        let expected_c = prev_rate * (end - start) * n_k as f64;
        let best_err = cands.iter().map(|c| c.err).fold(f64::INFINITY, f64::min);
        let chosen = cands.iter().reduce(|a, b| {
            if better(b, a, expected_c, best_err) {
                b
            } else {
                a
            }
        });
        let problem = match chosen {
            None => Some("no integer allocation of events and censorings exists".to_string()),
            Some(b) if b.err > TOLERANCE => Some(format!(
                "best achievable survival deviation {:.4} exceeds {TOLERANCE}",
                b.err
            )),
            Some(_) => None,
        };
        if let Some(reason) = problem {
            if let (true, Some(fixed), None) = (is_last, fixed_events, plan) {
                // the constrained final interval may fit once earlier
                // intervals carry part of the event total
                let natural = iv.greedy(&[]).iter().sum::<usize>() as i64;
                return Ok(Pass::Shift(fixed as i64 - natural, counts, fail(reason)));
            }
            return Err(fail(reason));
        }
        let mut best = chosen.expect("checked above");
        if let (Some((prev, _)), false) = (plan, is_last) {
            let events = |c: &Candidate| c.d.iter().sum::<usize>() as i64;
            let desired = prev[k] + shift;
            if let Some(alt) = cands.iter().filter(|c| c.err <= TOLERANCE).min_by(|a, b| {
                (events(a) - desired)
                    .abs()
                    .cmp(&(events(b) - desired).abs())
                    .then(a.err.total_cmp(&b.err))
            }) {
                best = alt;
            }
            shift -= events(best) - prev[k];
        }
        for (&(t, _), &dj) in iv.steps.iter().zip(&best.d) {
            out.extend(std::iter::repeat_n(IpdRecord::new(t, true, arm), dj));
        }
        out.extend(best.censors.iter().map(|&t| IpdRecord::new(t, false, arm)));
        let placed: usize = best.d.iter().sum();
        events_so_far += placed;
        counts.push(placed as i64);
        if is_last {
            let rest = n_k - placed - best.c;
            out.extend(std::iter::repeat_n(IpdRecord::new(end, false, arm), rest));
        }
        if end > start && n_k > 0 {
            prev_rate = best.c as f64 / ((end - start) * n_k as f64);
        }
        s = best.s_end;
    }

    out.sort_by(|a, b| a.time.total_cmp(&b.time).then(b.event.cmp(&a.event)));
    Ok(Pass::Done(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::km::{km_estimate, km_fit};

    #[test]
    fn flat_curve_censors_at_end() {
        let curve = KmCurve::new(vec![], vec![(0.0, 5), (6.0, 5), (12.0, 5)]).unwrap();
        let ipd = reconstruct_ipd(&curve, None, "A").unwrap();
        assert_eq!(ipd.len(), 5);
        assert!(ipd.iter().all(|r| !r.event && r.time == 12.0));
    }

    #[test]
    fn single_total_drop() {
        let curve = KmCurve::new(vec![(6.0, 0.0)], vec![(0.0, 10), (12.0, 0)]).unwrap();
        let ipd = reconstruct_ipd(&curve, None, "A").unwrap();
        assert_eq!(ipd.len(), 10);
        assert!(ipd.iter().all(|r| r.event && r.time == 6.0));
        let curve = KmCurve::new(vec![(6.0, 0.0)], vec![(0.0, 10)]).unwrap();
        assert_eq!(reconstruct_ipd(&curve, Some(10), "A").unwrap().len(), 10);
    }

    #[test]
    fn honours_risk_table_and_total() {
        let data: Vec<IpdRecord> = (1..=40)
            .map(|i| IpdRecord::new(i as f64 * 0.7, i % 3 != 0, "A"))
            .collect();
        let grid = [0.0, 6.0, 12.0, 18.0, 24.0];
        let curve = km_estimate(&data, &grid).unwrap();
        let total = data.iter().filter(|r| r.event).count();
        let ipd = reconstruct_ipd(&curve, Some(total), "A").unwrap();
        assert_eq!(ipd.iter().filter(|r| r.event).count(), total);
        let fit = km_fit(&ipd).unwrap();
        for &(g, n) in &curve.risk_table {
            assert_eq!(fit.at_risk(g), n, "at t={g}");
        }
        for &(t, s) in &curve.steps {
            assert!((fit.survival_at(t) - s).abs() <= TOLERANCE);
        }
    }

    #[test]
    fn infeasible_interval_named() {
        // half the cohort dies but nobody leaves the risk set
        let curve = KmCurve::new(vec![(3.0, 0.5)], vec![(0.0, 10), (6.0, 10)]).unwrap();
        match reconstruct_ipd(&curve, None, "A") {
            Err(Error::Reconstruction { interval, .. }) => assert_eq!(interval, 0),
            other => panic!("expected reconstruction error, got {other:?}"),
        }
    }
}
