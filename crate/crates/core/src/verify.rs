//! Independent checks on a schedule: a grid-search oracle over per-epoch
//! departures, Lagrange multiplier reconstruction for static schedules, and
//! the per-epoch off / on-off / on structure.
//!
//! None of this calls into the tautening scan.

use serde::Serialize;

use crate::error::VerifyError;
use crate::model::{check_feasible, constraint_slacks, Instance};
use crate::power::{EpochProfile, PowerModel};
use crate::schedule::{Binding, Schedule};
use crate::taut_fading::WaterPlan;
use crate::taut_static::SegmentPlan;

pub const MAX_ORACLE_EPOCHS: usize = 8;
pub const MIN_GRID_POINTS: usize = 50;
/// Relative tolerance of the structure and multiplier checks.
pub const KKT_TOL: f64 = 1e-9;

/// Minimum of `sum_n epoch_energy(Phi_n)` over departure vectors on a grid.
///
/// Cumulative departures `X_n` are searched by dynamic programming over a
/// uniform grid of step `G / grid_points` plus every constraint threshold,
/// then twice more around the incumbent with the step halved each time.
pub fn oracle_energy<M: PowerModel + ?Sized>(
    instance: &Instance,
    model: &M,
    grid_points: usize,
) -> Result<f64, VerifyError> {
    let n = instance.epochs();
    if n > MAX_ORACLE_EPOCHS {
        return Err(VerifyError::TooLarge {
            max: MAX_ORACLE_EPOCHS,
            got: n,
        });
    }
    if grid_points < MIN_GRID_POINTS {
        return Err(VerifyError::TooCoarse {
            min: MIN_GRID_POINTS,
            got: grid_points,
        });
    }
    check_feasible(instance)?;
    let rho = instance.circuit().effective_rho()?;
    let total = instance.total_data();
    if total <= 0.0 {
        return Ok(0.0);
    }
    let grid = instance.grid();
    let profiles: Vec<EpochProfile> = (0..n)
        .map(|k| EpochProfile::new(model, instance.channel().gain(k), grid.length(k), rho))
        .collect();

    // Box bounds on X_k from deadlines behind and arrivals ahead.
    let mut lower = vec![0.0f64; n + 1];
    let mut upper = vec![total; n + 1];
    let mut thresholds = Vec::new();
    let mut demand = 0.0;
    for d in instance.deadlines() {
        demand += d.amount;
        lower[d.epoch] = lower[d.epoch].max(demand);
        thresholds.push(demand);
    }
    let mut before = 0.0;
    for a in instance.arrivals() {
        upper[a.epoch] = upper[a.epoch].min(before);
        thresholds.push(before);
        before += a.amount;
    }
    for k in 1..=n {
        lower[k] = lower[k].max(lower[k - 1]);
    }
    for k in (0..n).rev() {
        upper[k] = upper[k].min(upper[k + 1]);
    }
    lower[n] = total;
    upper[n] = total;
    upper[0] = 0.0;

    let candidates = |step: f64, around: Option<&[f64]>, radius: f64| -> Vec<Vec<f64>> {
        (0..=n)
            .map(|k| {
                let (lo, hi) = match around {
                    Some(c) => ((c[k] - radius).max(lower[k]), (c[k] + radius).min(upper[k])),
                    None => (lower[k], upper[k]),
                };
                let mut v = vec![lo, hi];
                if let Some(c) = around {
                    v.push(c[k]);
                }
                let first = (lo / step).ceil() as i64;
                let last = (hi / step).floor() as i64;
                v.extend((first..=last).map(|i| i as f64 * step));
                v.extend(thresholds.iter().copied().filter(|&t| t >= lo && t <= hi));
                v.retain(|&x| x >= lo && x <= hi);
                v.sort_by(f64::total_cmp);
                v.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * total);
                v
            })
            .collect()
    };

    let mut step = total / grid_points as f64;
    let (mut best, mut path) = grid_dp(&candidates(step, None, 0.0), |k, phi| {
        profiles[k].energy(model, phi, rho)
    });
    for _ in 0..2 {
        let radius = 4.0 * step;
        step /= 2.0;
        let (e, p) = grid_dp(&candidates(step, Some(&path), radius), |k, phi| {
            profiles[k].energy(model, phi, rho)
        });
        if e <= best {
            best = e;
            path = p;
        }
    }
    Ok(best)
}

/// Shortest path through monotone cumulative values, one layer per boundary.
fn grid_dp(layers: &[Vec<f64>], cost: impl Fn(usize, f64) -> f64) -> (f64, Vec<f64>) {
    let mut value = vec![0.0f64; layers[0].len()];
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(layers.len());
    back.push(vec![0; layers[0].len()]);
    for k in 1..layers.len() {
        let prev = &layers[k - 1];
        let mut next = vec![f64::INFINITY; layers[k].len()];
        let mut arg = vec![0; layers[k].len()];
        for (b, &x) in layers[k].iter().enumerate() {
            for (a, &x0) in prev.iter().enumerate() {
                if x0 > x {
                    break;
                }
                if !value[a].is_finite() {
                    continue;
                }
                let v = value[a] + cost(k - 1, x - x0);
                if v < next[b] {
                    next[b] = v;
                    arg[b] = a;
                }
            }
        }
        value = next;
        back.push(arg);
    }
    let last = layers.len() - 1;
    let (mut idx, best) = value
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let mut path = vec![0.0; layers.len()];
    for k in (0..=last).rev() {
        path[k] = layers[k][idx];
        idx = back[k][idx];
    }
    (best, path)
}

/// `G * max_n unit_cost_n / grid_points`: how far the grid optimum may sit
/// above the true one.
pub fn oracle_tolerance<M: PowerModel + ?Sized>(
    instance: &Instance,
    model: &M,
    grid_points: usize,
) -> Result<f64, VerifyError> {
    let rho = instance.circuit().effective_rho()?;
    let worst = (0..instance.epochs())
        .map(|n| model.ee_rate(instance.channel().gain(n), rho).unit_cost)
        .fold(0.0, f64::max);
    Ok(instance.total_data() * worst / grid_points as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Multipliers {
    /// One per arrival event, including the trivial first and terminal ones.
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    /// Per-epoch water level implied by the multipliers.
    pub water: Vec<f64>,
}

/// Rebuilds Lagrange multipliers from a static plan and checks stationarity,
/// the on-off structure, dual feasibility and complementary slackness.
pub fn kkt_certificate<M: PowerModel + ?Sized>(
    instance: &Instance,
    model: &M,
    schedule: &Schedule,
    plan: &SegmentPlan,
) -> Result<Multipliers, VerifyError> {
    let g = instance.channel().static_gain().ok_or(VerifyError::NotStatic)?;
    let rho = instance.circuit().effective_rho()?;
    let ee = model.ee_rate(g, rho);
    let n = instance.epochs();
    let segs = &plan.segments;
    let mismatch = |m: String| Err(VerifyError::StructureMismatch(m));
    if schedule.epochs() != n {
        return mismatch(format!("schedule has {} epochs, instance {n}", schedule.epochs()));
    }
    if segs.is_empty() || segs[segs.len() - 1].tau != n {
        return mismatch("plan must end at the horizon".into());
    }
    let arrivals = instance.arrivals();
    let deadlines = instance.deadlines();
    let mut lambda = vec![0.0; arrivals.len()];
    let mut mu = vec![0.0; deadlines.len()];
    let price = |r: f64| model.marginal(r, g);
    mu[deadlines.len() - 1] = price(segs[segs.len() - 1].rate);
    for m in 0..segs.len() - 1 {
        let (here, next) = (&segs[m], &segs[m + 1]);
        if m > 0 && here.tau <= segs[m - 1].tau {
            return mismatch(format!("segment {} does not advance", m + 1));
        }
        let jump = price(next.rate) - price(here.rate);
        let scale = price(next.rate).max(price(here.rate));
        match here.binding {
            Binding::Causality => {
                let Some(i) = arrivals.iter().position(|a| a.epoch == here.tau) else {
                    return mismatch(format!("no arrival at boundary {}", here.tau));
                };
                if jump < -KKT_TOL * scale {
                    return mismatch(format!("rate falls across the arrival at t_{}", here.tau));
                }
                lambda[i] = jump.max(0.0);
            }
            Binding::Deadline => {
                let Some(j) = deadlines.iter().position(|d| d.epoch == here.tau) else {
                    return mismatch(format!("no deadline at boundary {}", here.tau));
                };
                if -jump < -KKT_TOL * scale {
                    return mismatch(format!("rate rises across the deadline at t_{}", here.tau));
                }
                mu[j] = (-jump).max(0.0);
            }
            Binding::Terminal => return mismatch(format!("terminal binding at t_{}", here.tau)),
        }
    }

    // w_n = sum of mu over deadlines at or after epoch n minus the same for lambda.
    let mut water = vec![0.0; n];
    let mut magnitude = vec![0.0; n];
    let (mut i, mut j) = (arrivals.len(), deadlines.len());
    let (mut sum_l, mut sum_m, mut abs_sum) = (0.0, 0.0, 0.0);
    for k in (1..=n).rev() {
        while i > 0 && arrivals[i - 1].epoch >= k {
            i -= 1;
            sum_l += lambda[i];
            abs_sum += lambda[i];
        }
        while j > 0 && deadlines[j - 1].epoch >= k {
            j -= 1;
            sum_m += mu[j];
            abs_sum += mu[j];
        }
        water[k - 1] = sum_m - sum_l;
        magnitude[k - 1] = abs_sum;
    }

    let grid = instance.grid();
    let fail = |m: String| Err(VerifyError::Condition(m));
    for (k, a) in schedule.actions().iter().enumerate() {
        let w = water[k];
        let slack = KKT_TOL * w.abs() + 8.0 * f64::EPSILON * magnitude[k];
        let len = grid.length(k);
        if a.on_time > 0.0 {
            let p = price(a.rate);
            if (w - p).abs() > slack {
                return fail(format!("epoch {}: water {w} but marginal power {p}", k + 1));
            }
            if a.rate < ee.rate * (1.0 - KKT_TOL) {
                return fail(format!("epoch {}: rate {} below r_ee {}", k + 1, a.rate, ee.rate));
            }
            if a.rate > ee.rate * (1.0 + KKT_TOL) && a.on_time < len * (1.0 - KKT_TOL) {
                return fail(format!("epoch {}: rate above r_ee but not always on", k + 1));
            }
        } else if w > ee.water + slack.max(KKT_TOL * ee.water) {
            return fail(format!("epoch {}: off although water {w} exceeds w_ee {}", k + 1, ee.water));
        }
    }

    let tol = instance.tolerance();
    let slacks = constraint_slacks(instance, &schedule.phis());
    for (i, (&l, &s)) in lambda.iter().zip(&slacks.causality).enumerate() {
        if s < -tol {
            return fail(format!("causality {i} violated by {}", -s));
        }
        if l > 0.0 && s > tol {
            return fail(format!("causality {i} has multiplier {l} but slack {s}"));
        }
    }
    for (j, (&m, &s)) in mu.iter().zip(&slacks.deadline).enumerate() {
        if s < -tol {
            return fail(format!("deadline {} violated by {}", j + 1, -s));
        }
        if m > 0.0 && s > tol {
            return fail(format!("deadline {} has multiplier {m} but slack {s}", j + 1));
        }
    }
    Ok(Multipliers { lambda, mu, water })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Off,
    OnOff,
    On,
    /// Transmits below `r_ee`, or above it without staying on all epoch.
    Violation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureReport {
    pub labels: Vec<Strategy>,
    /// 1-based epochs labelled `Violation`.
    pub violations: Vec<usize>,
}

impl StructureReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Labels every epoch with the off / on-off / on strategy it follows, using
/// that epoch's own `r_ee`.
pub fn check_structure<M: PowerModel + ?Sized>(
    instance: &Instance,
    model: &M,
    schedule: &Schedule,
) -> Result<StructureReport, VerifyError> {
    let rho = instance.circuit().effective_rho()?;
    let grid = instance.grid();
    let labels: Vec<Strategy> = schedule
        .actions()
        .iter()
        .enumerate()
        .map(|(k, a)| {
            if a.on_time <= 0.0 || a.phi <= 0.0 {
                return Strategy::Off;
            }
            let r_ee = model.ee_rate(instance.channel().gain(k), rho).rate;
            let full = a.on_time >= grid.length(k) * (1.0 - KKT_TOL);
            if (a.rate - r_ee).abs() <= KKT_TOL * r_ee {
                if full {
                    Strategy::On
                } else {
                    Strategy::OnOff
                }
            } else if a.rate > r_ee && full {
                Strategy::On
            } else {
                Strategy::Violation
            }
        })
        .collect();
    let violations = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == Strategy::Violation)
        .map(|(k, _)| k + 1)
        .collect();
    Ok(StructureReport { labels, violations })
}

fn monotone<'a>(steps: impl Iterator<Item = (f64, Binding, f64)> + 'a) -> bool {
    let mut ok = true;
    for (here, binding, next) in steps {
        ok &= match binding {
            Binding::Causality => next > here,
            Binding::Deadline => next < here,
            Binding::Terminal => false,
        };
    }
    ok
}

/// Rates rise across arrival bindings and fall across deadline bindings.
pub fn plan_is_monotone(plan: &SegmentPlan) -> bool {
    let s = &plan.segments;
    s.windows(2).all(|w| w[0].tau < w[1].tau)
        && monotone(s.windows(2).map(|w| (w[0].rate, w[0].binding, w[1].rate)))
}

/// Water levels rise across arrival bindings and fall across deadline bindings.
pub fn water_plan_is_monotone(plan: &WaterPlan) -> bool {
    let s = &plan.segments;
    s.windows(2).all(|w| w[0].tau < w[1].tau)
        && monotone(s.windows(2).map(|w| (w[0].w, w[0].binding, w[1].w)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub causality_slacks: Vec<f64>,
    pub deadline_slacks: Vec<f64>,
    pub feasible: bool,
    pub strategies: Vec<Strategy>,
    pub structure_ok: bool,
    pub plan_monotone: Option<bool>,
    pub multipliers: Option<Multipliers>,
    pub kkt_error: Option<String>,
    pub energy: f64,
    pub oracle_energy: Option<f64>,
    pub oracle_tolerance: Option<f64>,
    pub oracle_ok: Option<bool>,
    pub pass: bool,
}

/// Runs every applicable check. The oracle is skipped on instances with more
/// than `MAX_ORACLE_EPOCHS` epochs, the certificate when no static plan is
/// given.
pub fn verify_schedule<M: PowerModel + ?Sized>(
    instance: &Instance,
    model: &M,
    schedule: &Schedule,
    plan: Option<&SegmentPlan>,
    grid_points: usize,
) -> Result<VerificationReport, VerifyError> {
    if schedule.epochs() != instance.epochs() {
        return Err(VerifyError::StructureMismatch(format!(
            "schedule has {} epochs, instance {}",
            schedule.epochs(),
            instance.epochs()
        )));
    }
    let slacks = constraint_slacks(instance, &schedule.phis());
    let feasible = slacks.min() >= -instance.tolerance();
    let structure = check_structure(instance, model, schedule)?;
    let energy = schedule.total_energy();

    let (plan_monotone, multipliers, kkt_error) = match plan {
        Some(p) if instance.channel().static_gain().is_some() => {
            match kkt_certificate(instance, model, schedule, p) {
                Ok(m) => (Some(plan_is_monotone(p)), Some(m), None),
                Err(e) => (Some(plan_is_monotone(p)), None, Some(e.to_string())),
            }
        }
        Some(p) => (Some(plan_is_monotone(p)), None, None),
        None => (None, None, None),
    };

    let (oracle_energy, oracle_tolerance, oracle_ok) = if instance.epochs() <= MAX_ORACLE_EPOCHS {
        let best = oracle_energy(instance, model, grid_points)?;
        let tol = oracle_tolerance(instance, model, grid_points)?;
        let ok = energy <= best + KKT_TOL * best.max(1.0) && best <= energy + tol;
        (Some(best), Some(tol), Some(ok))
    } else {
        (None, None, None)
    };

    let pass = feasible
        && structure.ok()
        && plan_monotone.unwrap_or(true)
        && kkt_error.is_none()
        && oracle_ok.unwrap_or(true);
    Ok(VerificationReport {
        causality_slacks: slacks.causality,
        deadline_slacks: slacks.deadline,
        feasible,
        strategies: structure.labels,
        structure_ok: structure.violations.is_empty(),
        plan_monotone,
        multipliers,
        kkt_error,
        energy,
        oracle_energy,
        oracle_tolerance,
        oracle_ok,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChannelTrace, EpochGrid, Event};
    use crate::power::{CircuitParams, Shannon};
    use crate::schedule::EpochAction;
    use crate::taut_static::{schedule_static, Segment};
    use std::f64::consts::E;

    fn inst(lengths: &[f64], arr: &[(usize, f64)], dl: &[(usize, f64)]) -> Instance {
        Instance::new(
            EpochGrid::from_lengths(lengths).unwrap(),
            arr.iter().map(|&(k, a)| Event::new(k, a)).collect(),
            dl.iter().map(|&(k, d)| Event::new(k, d)).collect(),
            ChannelTrace::Static(1.0),
            CircuitParams::on_power(1.0),
        )
        .unwrap()
    }

    #[test]
    fn oracle_closed_forms() {
        let strict = inst(&[0.5], &[(0, 1.0)], &[(1, 1.0)]);
        let e = oracle_energy(&strict, &Shannon, 400).unwrap();
        assert!((e - E * E / 2.0).abs() < 1e-9);

        let on_off = inst(&[1.0, 1.0], &[(0, 1.0)], &[(2, 1.0)]);
        let e = oracle_energy(&on_off, &Shannon, 400).unwrap();
        assert!((e - E).abs() <= oracle_tolerance(&on_off, &Shannon, 400).unwrap());

        let empty = inst(&[1.0, 1.0], &[(0, 0.0)], &[(2, 0.0)]);
        assert_eq!(oracle_energy(&empty, &Shannon, 400).unwrap(), 0.0);
    }

    #[test]
    fn oracle_guards() {
        let big = inst(&[1.0; 9], &[(0, 1.0)], &[(9, 1.0)]);
        assert!(matches!(oracle_energy(&big, &Shannon, 400), Err(VerifyError::TooLarge { .. })));
        let small = inst(&[1.0], &[(0, 1.0)], &[(1, 1.0)]);
        assert!(matches!(oracle_energy(&small, &Shannon, 10), Err(VerifyError::TooCoarse { .. })));
    }

    #[test]
    fn certificate_for_two_deadlines() {
        let i = inst(&[1.0, 1.0], &[(0, 4.0)], &[(1, 3.0), (2, 1.0)]);
        let (s, plan) = schedule_static(&i, &Shannon).unwrap();
        let m = kkt_certificate(&i, &Shannon, &s, &plan).unwrap();
        assert!((m.mu[0] - (E.powi(3) - E)).abs() < 1e-8);
        assert!((m.mu[1] - E).abs() < 1e-8);
        assert!(m.lambda.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn certificate_single_segment() {
        let i = inst(&[0.5], &[(0, 1.0)], &[(1, 1.0)]);
        let (s, plan) = schedule_static(&i, &Shannon).unwrap();
        let m = kkt_certificate(&i, &Shannon, &s, &plan).unwrap();
        assert_eq!(m.mu.len(), 1);
        assert!((m.mu[0] - E * E).abs() < 1e-9);
    }

    #[test]
    fn certificate_rejects_rate_rise_after_deadline() {
        let i = inst(&[1.0, 1.0], &[(0, 4.0)], &[(1, 3.0), (2, 1.0)]);
        let (s, _) = schedule_static(&i, &Shannon).unwrap();
        let forged = SegmentPlan {
            segments: vec![
                Segment { tau: 1, rate: 3.0, delta: 3.0, binding: Binding::Deadline },
                Segment { tau: 2, rate: 5.0, delta: 4.0, binding: Binding::Terminal },
            ],
        };
        assert!(matches!(
            kkt_certificate(&i, &Shannon, &s, &forged),
            Err(VerifyError::StructureMismatch(_))
        ));
    }

    #[test]
    fn structure_labels() {
        let i = inst(&[1.0, 1.0], &[(0, 1.0)], &[(2, 1.0)]);
        let (opt, _) = schedule_static(&i, &Shannon).unwrap();
        let r = check_structure(&i, &Shannon, &opt).unwrap();
        assert_eq!(r.labels, vec![Strategy::OnOff, Strategy::OnOff]);

        let slow = Schedule::assemble(&i, &Shannon, vec![EpochAction::new(0.5, 1.0); 2]).unwrap();
        let r = check_structure(&i, &Shannon, &slow).unwrap();
        assert_eq!(r.violations, vec![1, 2]);

        let empty = inst(&[1.0, 1.0], &[(0, 0.0)], &[(2, 0.0)]);
        let off = Schedule::assemble(&empty, &Shannon, vec![EpochAction::off(); 2]).unwrap();
        assert_eq!(check_structure(&empty, &Shannon, &off).unwrap().labels, vec![Strategy::Off; 2]);
    }

    #[test]
    fn full_report_passes_on_optimum() {
        let i = inst(&[1.0, 1.0], &[(0, 4.0)], &[(1, 3.0), (2, 1.0)]);
        let (s, plan) = schedule_static(&i, &Shannon).unwrap();
        let r = verify_schedule(&i, &Shannon, &s, Some(&plan), 400).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.plan_monotone, Some(true));
    }
}
