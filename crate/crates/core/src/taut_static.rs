//! Optimal offline schedule over a time-invariant channel: pull the string
//! taut between the arrival and minimum-departure curves, then clip every
//! rate below `r_ee` to an on-off burst at `r_ee` carrying the same data.

use serde::{Deserialize, Serialize};

use crate::error::{PowerError, SolveError};
use crate::model::{check_feasible, Instance};
use crate::power::{EeRate, PowerModel};
use crate::schedule::{Binding, EpochAction, Schedule};
use crate::tautening::{constraint_events, first_change};

/// Relative gap below which neighbouring segment rates count as equal.
pub const MERGE_TOL: f64 = 1e-12;

/// First rate change of the clipped taut string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstChange {
    pub tau: usize,
    /// Segment rate after clipping, `max(r_ee, taut_rate)`.
    pub rate: f64,
    /// Slope of the unclipped string over `(0, t_tau]`.
    pub taut_rate: f64,
    pub delta: f64,
    pub binding: Binding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub tau: usize,
    pub rate: f64,
    pub delta: f64,
    pub binding: Binding,
}

/// Maximal runs of constant (clipped) rate, in time order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPlan {
    pub segments: Vec<Segment>,
}

/// Equivalent on-off action for one epoch whose string slope is `taut`.
pub fn clip_epoch(taut: f64, length: f64, ee: &EeRate) -> EpochAction {
    let phi = taut * length;
    if !(phi > 0.0) {
        EpochAction::off()
    } else if taut >= ee.rate {
        EpochAction::with_phi(taut, length, phi)
    } else {
        EpochAction::with_phi(ee.rate, phi / ee.rate, phi)
    }
}

fn static_setup<M: PowerModel + ?Sized>(
    instance: &Instance,
    model: &M,
) -> Result<(f64, f64, EeRate), SolveError> {
    let g = instance.channel().static_gain().ok_or(SolveError::NotStatic)?;
    check_feasible(instance)?;
    let rho = instance.circuit().effective_rho()?;
    Ok((g, rho, model.ee_rate(g, rho)))
}

pub fn first_change_r<M: PowerModel + ?Sized>(
    instance: &Instance,
    model: &M,
) -> Result<FirstChange, SolveError> {
    let (_, _, ee) = static_setup(instance, model)?;
    let times = instance.grid().boundaries();
    let events = constraint_events(instance);
    let c = first_change(&events, 0, 0.0, instance.epochs(), 0.0, |tau, _, target| {
        target / times[tau]
    });
    Ok(FirstChange {
        tau: c.tau,
        rate: c.level.max(ee.rate),
        taut_rate: c.level,
        delta: c.delta,
        binding: c.binding,
    })
}

/// Taut string with every epoch clipped against `ee`. Channel gain and
/// circuit only enter through `ee`, so callers may price the result on a
/// different channel. Returns the actions and the merged plan.
pub(crate) fn taut_actions(instance: &Instance, ee: &EeRate) -> (Vec<EpochAction>, SegmentPlan) {
    let grid = instance.grid();
    let times = grid.boundaries();
    let n = instance.epochs();
    let events = constraint_events(instance);
    let mut actions = Vec::with_capacity(n);
    let mut segments: Vec<Segment> = Vec::new();
    let (mut offset, mut delivered) = (0, 0.0);
    while offset < n {
        let c = first_change(&events, offset, delivered, n, 0.0, |tau, _, target| {
            target / (times[tau] - times[offset])
        });
        for k in offset..c.tau {
            actions.push(clip_epoch(c.level, grid.length(k), ee));
        }
        let seg = Segment {
            tau: c.tau,
            rate: c.level.max(ee.rate),
            delta: c.delta,
            binding: c.binding,
        };
        match segments.last_mut() {
            Some(prev) if (prev.rate - seg.rate).abs() <= MERGE_TOL * prev.rate.max(seg.rate) => {
                *prev = seg;
            }
            _ => segments.push(seg),
        }
        offset = c.tau;
        delivered = c.delta;
    }
    (actions, SegmentPlan { segments })
}

pub fn schedule_static<M: PowerModel + ?Sized>(
    instance: &Instance,
    model: &M,
) -> Result<(Schedule, SegmentPlan), SolveError> {
    let (_, _, ee) = static_setup(instance, model)?;
    let (actions, plan) = taut_actions(instance, &ee);
    Ok((Schedule::assemble(instance, model, actions)?, plan))
}

/// Clips an always-on schedule epoch by epoch, preserving every departure.
pub fn clip_from_ideal<M: PowerModel + ?Sized>(
    instance: &Instance,
    model: &M,
    ideal: &Schedule,
) -> Result<Schedule, PowerError> {
    let rho = instance.circuit().effective_rho()?;
    let grid = instance.grid();
    let actions = ideal
        .actions()
        .iter()
        .enumerate()
        .map(|(n, a)| {
            let ee = model.ee_rate(instance.channel().gain(n), rho);
            let len = grid.length(n);
            let mut clipped = clip_epoch(a.phi / len, len, &ee);
            if clipped.phi > 0.0 {
                clipped.phi = a.phi;
            }
            clipped
        })
        .collect();
    Schedule::assemble(instance, model, actions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChannelTrace, EpochGrid, Event};
    use crate::power::{CircuitParams, Shannon};
    use std::f64::consts::E;

    fn inst(lengths: &[f64], arr: &[(usize, f64)], dl: &[(usize, f64)], rho: f64) -> Instance {
        Instance::new(
            EpochGrid::from_lengths(lengths).unwrap(),
            arr.iter().map(|&(k, a)| Event::new(k, a)).collect(),
            dl.iter().map(|&(k, d)| Event::new(k, d)).collect(),
            ChannelTrace::Static(1.0),
            CircuitParams::on_power(rho),
        )
        .unwrap()
    }

    #[test]
    fn first_change_two_deadlines() {
        let i = inst(&[1.0, 1.0], &[(0, 4.0)], &[(1, 3.0), (2, 1.0)], 1.0);
        let c = first_change_r(&i, &Shannon).unwrap();
        assert_eq!((c.tau, c.binding), (1, Binding::Deadline));
        assert!((c.rate - 3.0).abs() < 1e-12 && (c.delta - 3.0).abs() < 1e-12);
    }

    #[test]
    fn first_change_single_deadline() {
        let i = inst(&[1.0, 2.0], &[(0, 6.0)], &[(2, 6.0)], 1.0);
        let c = first_change_r(&i, &Shannon).unwrap();
        assert_eq!((c.tau, c.binding), (2, Binding::Terminal));
        assert!((c.rate - 2.0).abs() < 1e-12);

        let loose = inst(&[1.0, 3.0], &[(0, 1.0)], &[(2, 1.0)], 1.0);
        let c = first_change_r(&loose, &Shannon).unwrap();
        assert!((c.taut_rate - 0.25).abs() < 1e-12);
        assert!((c.rate - 1.0).abs() < 1e-9);
    }

    #[test]
    fn strict_single_epoch() {
        let i = inst(&[0.5], &[(0, 1.0)], &[(1, 1.0)], 1.0);
        let (s, plan) = schedule_static(&i, &Shannon).unwrap();
        let a = s.actions()[0];
        assert!((a.rate - 2.0).abs() < 1e-12 && a.on_time == 0.5);
        assert!((s.total_energy() - E * E / 2.0).abs() < 1e-9);
        assert_eq!(plan.segments.len(), 1);
    }

    #[test]
    fn on_off_split() {
        let i = inst(&[1.0, 1.0], &[(0, 1.0)], &[(2, 1.0)], 1.0);
        let (s, _) = schedule_static(&i, &Shannon).unwrap();
        for a in s.actions() {
            assert!((a.rate - 1.0).abs() < 1e-9);
            assert!((a.on_time - 0.5).abs() < 1e-9);
            assert_eq!(a.phi, 0.5);
        }
        assert!((s.total_energy() - E).abs() < 1e-9);
    }

    #[test]
    fn two_deadline_schedule() {
        let i = inst(&[1.0, 1.0], &[(0, 4.0)], &[(1, 3.0), (2, 1.0)], 1.0);
        let (s, plan) = schedule_static(&i, &Shannon).unwrap();
        let rates: Vec<f64> = s.actions().iter().map(|a| a.rate).collect();
        assert!((rates[0] - 3.0).abs() < 1e-12 && (rates[1] - 1.0).abs() < 1e-9);
        assert!((s.total_energy() - (E.powi(3) + E)).abs() < 1e-9);
        let b: Vec<_> = plan.segments.iter().map(|s| (s.tau, s.binding)).collect();
        assert_eq!(b, vec![(1, Binding::Deadline), (2, Binding::Terminal)]);
    }

    #[test]
    fn clipping_rules() {
        let ee = EeRate { rate: 1.0, water: E, unit_cost: E };
        assert_eq!(clip_epoch(1.0, 1.0, &ee), EpochAction::with_phi(1.0, 1.0, 1.0));
        assert_eq!(clip_epoch(0.5, 1.0, &ee), EpochAction::with_phi(1.0, 0.5, 0.5));
        assert_eq!(clip_epoch(2.0, 1.0, &ee), EpochAction::with_phi(2.0, 1.0, 2.0));
        assert_eq!(clip_epoch(0.0, 1.0, &ee), EpochAction::off());
    }

    #[test]
    fn intermediate_deadline_inside_clipped_segment() {
        // Both taut slopes sit below r_ee; the early deadline must still be met.
        let i = inst(&[1.0, 1.0, 1.0], &[(0, 1.0)], &[(1, 0.9), (3, 0.1)], 1.0);
        let (s, plan) = schedule_static(&i, &Shannon).unwrap();
        assert!(s.actions()[0].phi >= 0.9 - 1e-12);
        assert_eq!(plan.segments.len(), 1);
    }

    #[test]
    fn ideal_clip_matches_direct_solve() {
        let i = inst(&[1.0, 1.0, 1.0, 1.0], &[(0, 1.5), (2, 0.5)], &[(2, 0.5), (4, 1.5)], 1.0);
        let (direct, _) = schedule_static(&i, &Shannon).unwrap();
        let (ideal, _) = schedule_static(&i.with_circuit(CircuitParams::ideal()), &Shannon).unwrap();
        let clipped = clip_from_ideal(&i, &Shannon, &ideal).unwrap();
        for (a, b) in direct.actions().iter().zip(clipped.actions()) {
            assert!((a.phi - b.phi).abs() < 1e-12);
        }
        assert!((direct.total_energy() - clipped.total_energy()).abs() < 1e-9 * direct.total_energy());
    }

    #[test]
    fn rejects_fading_and_infeasible() {
        let f = inst(&[1.0, 1.0], &[(0, 1.0)], &[(2, 1.0)], 1.0)
            .with_channel(ChannelTrace::PerEpoch(vec![1.0, 2.0]))
            .unwrap();
        assert_eq!(schedule_static(&f, &Shannon).unwrap_err(), SolveError::NotStatic);
        let bad = inst(&[1.0, 1.0], &[(0, 0.0), (1, 1.0)], &[(1, 1.0), (2, 0.0)], 1.0);
        assert!(matches!(schedule_static(&bad, &Shannon), Err(SolveError::Infeasible(_))));
    }
}
