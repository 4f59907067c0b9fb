//! The first-change scan shared by the static and fading solvers.
//!
//! Both solvers pull a "string" between the arrival and minimum-departure
//! curves. They differ only in how a level (a rate, or a water level) is
//! derived from a prefix target, so the scan is written once over any totally
//! ordered level type.

use crate::model::Instance;
use crate::schedule::Binding;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Kind {
    Arrival,
    Deadline,
}

/// A cumulative constraint at boundary `epoch`: departures up to it may not
/// exceed `cumulative` (arrival) or must reach it (deadline).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ConstraintEvent {
    pub epoch: usize,
    pub kind: Kind,
    pub cumulative: f64,
}

/// Causality constraints for `i >= 1` and all deadline constraints, sorted by
/// epoch with arrivals first on ties.
pub(crate) fn constraint_events(instance: &Instance) -> Vec<ConstraintEvent> {
    let mut arrivals = Vec::new();
    let mut before = 0.0;
    for (i, e) in instance.arrivals().iter().enumerate() {
        if i > 0 {
            arrivals.push(ConstraintEvent {
                epoch: e.epoch,
                kind: Kind::Arrival,
                cumulative: before,
            });
        }
        before += e.amount;
    }
    let mut demand = 0.0;
    let deadlines = instance.deadlines().iter().map(|e| {
        demand += e.amount;
        ConstraintEvent {
            epoch: e.epoch,
            kind: Kind::Deadline,
            cumulative: demand,
        }
    });
    let mut out: Vec<ConstraintEvent> = Vec::with_capacity(arrivals.len() + instance.deadlines().len());
    let mut a = arrivals.into_iter().peekable();
    for d in deadlines {
        while let Some(x) = a.next_if(|x| x.epoch <= d.epoch) {
            out.push(x);
        }
        out.push(d);
    }
    out.extend(a);
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Change<L> {
    pub tau: usize,
    pub level: L,
    /// Cumulative departure at `t_tau`.
    pub delta: f64,
    pub binding: Binding,
}

/// Finds where the level first has to change after boundary `offset`, given
/// that `delivered` units have already left.
///
/// `level(tau, kind, target)` maps a constraint on the prefix
/// `(offset, tau]` to the level that meets it exactly: the smallest such level
/// for deadlines, the largest for arrivals.
pub(crate) fn first_change<L: PartialOrd + Copy>(
    events: &[ConstraintEvent],
    offset: usize,
    delivered: f64,
    horizon: usize,
    zero: L,
    mut level: impl FnMut(usize, Kind, f64) -> L,
) -> Change<L> {
    let start = events.partition_point(|e| e.epoch <= offset);
    let mut lo = (zero, offset, delivered);
    let mut hi: Option<(L, usize, f64)> = None;
    for e in &events[start..] {
        let target = (e.cumulative - delivered).max(0.0);
        let cand = level(e.epoch, e.kind, target);
        let reached = e.cumulative.max(delivered);
        match e.kind {
            Kind::Arrival => {
                if hi.is_none_or(|h| cand <= h.0) {
                    hi = Some((cand, e.epoch, reached));
                }
            }
            Kind::Deadline => {
                if cand >= lo.0 {
                    lo = (cand, e.epoch, reached);
                }
            }
        }
        if let Some(h) = hi {
            if lo.0 > h.0 && lo.1 < h.1 {
                return Change {
                    tau: lo.1,
                    level: lo.0,
                    delta: lo.2,
                    binding: Binding::Deadline,
                };
            }
            if lo.0 >= h.0 && lo.1 >= h.1 {
                return Change {
                    tau: h.1,
                    level: h.0,
                    delta: h.2,
                    binding: if h.1 == horizon {
                        Binding::Terminal
                    } else {
                        Binding::Causality
                    },
                };
            }
        }
    }
    // Only reachable when candidate levels sit on a flat stretch of the
    // departure function; any level on it serves the remaining data.
    let total = events.last().map_or(delivered, |e| e.cumulative.max(delivered));
    Change {
        tau: horizon,
        level: level(horizon, Kind::Deadline, total - delivered),
        delta: total,
        binding: Binding::Terminal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChannelTrace, EpochGrid, Event};
    use crate::power::CircuitParams;

    #[test]
    fn events_are_merged_arrivals_first() {
        let inst = Instance::new(
            EpochGrid::from_lengths(&[1.0, 1.0, 1.0]).unwrap(),
            vec![Event::new(0, 1.0), Event::new(1, 2.0)],
            vec![Event::new(1, 1.0), Event::new(3, 2.0)],
            ChannelTrace::Static(1.0),
            CircuitParams::ideal(),
        )
        .unwrap();
        let ev = constraint_events(&inst);
        let got: Vec<_> = ev.iter().map(|e| (e.epoch, e.kind, e.cumulative)).collect();
        assert_eq!(
            got,
            vec![
                (1, Kind::Arrival, 1.0),
                (1, Kind::Deadline, 1.0),
                (3, Kind::Arrival, 3.0),
                (3, Kind::Deadline, 3.0),
            ]
        );
    }
}
