//! Optimal offline schedule over a time-varying channel: the same tautening
//! scan as the static solver, run on water levels instead of rates.
//!
//! An epoch whose `w_ee` equals the water level can carry anything between
//! zero and `r_ee L`, so the total departure of a prefix is a staircase in
//! `w`. To keep it continuous, a level carries a fill fraction `0..=1` that
//! says how much of that flat step is used; levels compare lexicographically.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::SolveError;
use crate::model::{check_feasible, Instance};
use crate::power::{is_tie, EpochProfile, PowerModel};
use crate::schedule::{Binding, EpochAction, Schedule};
use crate::taut_static::MERGE_TOL;
use crate::tautening::{constraint_events, first_change, Kind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaterLevel {
    pub w: f64,
    /// Share of the tie capacity used by epochs sitting exactly at `w_ee`.
    pub fill: f64,
}

impl WaterLevel {
    pub const ZERO: WaterLevel = WaterLevel { w: 0.0, fill: 0.0 };
}

impl PartialOrd for WaterLevel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.w.partial_cmp(&other.w)? {
            Ordering::Equal => self.fill.partial_cmp(&other.fill),
            o => Some(o),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstChangeW {
    pub tau: usize,
    pub level: WaterLevel,
    pub delta: f64,
    pub binding: Binding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSegment {
    pub tau: usize,
    pub w: f64,
    pub delta: f64,
    pub binding: Binding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterPlan {
    pub segments: Vec<LevelSegment>,
}

/// Departure of a run of epochs as a function of the water level.
struct Prefix<'a, M: ?Sized> {
    model: &'a M,
    epochs: &'a [EpochProfile],
}

impl<M: PowerModel + ?Sized> Prefix<'_, M> {
    fn bounds(&self, w: f64) -> (f64, f64) {
        self.epochs.iter().fold((0.0, 0.0), |(lo, hi), p| {
            let d = p.departure(self.model, w);
            (lo + d.lo, hi + d.hi)
        })
    }

    /// Departure of the non-tie epochs and the summed tie capacity.
    fn split(&self, w: f64) -> (f64, f64) {
        let (lo, hi) = self.bounds(w);
        (lo, hi - lo)
    }

    fn tie_at(&self, w: f64) -> Option<f64> {
        self.epochs
            .iter()
            .map(|p| p.ee.water)
            .filter(|&we| is_tie(w, we))
            .min_by(|a, b| (a - w).abs().total_cmp(&(b - w).abs()))
    }

    fn bracket(&self, mut exceeds: impl FnMut(f64) -> bool) -> f64 {
        let top = self.epochs.iter().map(|p| p.ee.water).fold(1.0, f64::max);
        let mut hi = 2.0 * top;
        for _ in 0..2100 {
            if exceeds(hi) {
                return hi;
            }
            hi *= 2.0;
        }
        f64::INFINITY
    }

    fn finish(&self, w: f64, target: f64, empty_fill: f64) -> WaterLevel {
        let w = self.tie_at(w).unwrap_or(w);
        let (on, cap) = self.split(w);
        let fill = if cap > 0.0 {
            ((target - on) / cap).clamp(0.0, 1.0)
        } else {
            empty_fill
        };
        WaterLevel { w, fill }
    }

    /// Smallest level whose departure reaches `target`.
    fn solve_min(&self, target: f64) -> WaterLevel {
        if target <= 0.0 {
            return WaterLevel::ZERO;
        }
        let mut lo = 0.0;
        let mut hi = self.bracket(|w| self.bounds(w).1 >= target);
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.bounds(mid).1 >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        self.finish(hi, target, 0.0)
    }

    /// Largest level whose departure stays within `target`.
    fn solve_max(&self, target: f64) -> WaterLevel {
        let mut lo = 0.0;
        let mut hi = self.bracket(|w| self.bounds(w).0 > target);
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.bounds(mid).0 <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.finish(lo, target, 1.0)
    }
}

/// Smallest water level at which `(gain, length)` epochs can carry `target`.
pub fn solve_water_level<M: PowerModel + ?Sized>(
    model: &M,
    prefix: &[(f64, f64)],
    target: f64,
    rho_eff: f64,
) -> f64 {
    let epochs: Vec<EpochProfile> = prefix
        .iter()
        .map(|&(g, l)| EpochProfile::new(model, g, l, rho_eff))
        .collect();
    Prefix { model, epochs: &epochs }.solve_min(target).w
}

fn profiles<M: PowerModel + ?Sized>(instance: &Instance, model: &M, rho: f64) -> Vec<EpochProfile> {
    let grid = instance.grid();
    (0..instance.epochs())
        .map(|n| EpochProfile::new(model, instance.channel().gain(n), grid.length(n), rho))
        .collect()
}

fn scan<M: PowerModel + ?Sized>(
    model: &M,
    epochs: &[EpochProfile],
    events: &[crate::tautening::ConstraintEvent],
    offset: usize,
    delivered: f64,
) -> FirstChangeW {
    let c = first_change(events, offset, delivered, epochs.len(), WaterLevel::ZERO, |tau, kind, target| {
        let prefix = Prefix {
            model,
            epochs: &epochs[offset..tau],
        };
        match kind {
            Kind::Deadline => prefix.solve_min(target),
            Kind::Arrival => prefix.solve_max(target),
        }
    });
    FirstChangeW {
        tau: c.tau,
        level: c.level,
        delta: c.delta,
        binding: c.binding,
    }
}

pub fn first_change_w<M: PowerModel + ?Sized>(
    instance: &Instance,
    model: &M,
) -> Result<FirstChangeW, SolveError> {
    check_feasible(instance)?;
    let rho = instance.circuit().effective_rho()?;
    let epochs = profiles(instance, model, rho);
    Ok(scan(model, &epochs, &constraint_events(instance), 0, 0.0))
}

/// Water-tautening with an explicit effective circuit power.
pub(crate) fn water_actions<M: PowerModel + ?Sized>(
    instance: &Instance,
    model: &M,
    rho: f64,
) -> (Vec<EpochAction>, WaterPlan) {
    let epochs = profiles(instance, model, rho);
    let events = constraint_events(instance);
    let n = epochs.len();
    let mut actions = Vec::with_capacity(n);
    let mut segments: Vec<LevelSegment> = Vec::new();
    let (mut offset, mut delivered) = (0, 0.0);
    while offset < n {
        let c = scan(model, &epochs, &events, offset, delivered);
        let w = c.level.w;
        let seg = &epochs[offset..c.tau];
        let mut on = 0.0;
        let mut cap = 0.0;
        for p in seg {
            if is_tie(w, p.ee.water) {
                cap += p.tie_capacity();
            } else if w > p.ee.water {
                on += model.inverse_marginal(w, p.gain).max(0.0) * p.length;
            }
        }
        let fill = if cap > 0.0 {
            ((c.delta - delivered - on) / cap).clamp(0.0, 1.0)
        } else {
            0.0
        };
        for p in seg {
            let action = if is_tie(w, p.ee.water) {
                let phi = fill * p.tie_capacity();
                if phi > 0.0 {
                    EpochAction::with_phi(p.ee.rate, fill * p.length, phi)
                } else {
                    EpochAction::off()
                }
            } else if w > p.ee.water {
                let r = model.inverse_marginal(w, p.gain).max(0.0);
                if r > 0.0 {
                    EpochAction::new(r, p.length)
                } else {
                    EpochAction::off()
                }
            } else {
                EpochAction::off()
            };
            actions.push(action);
        }
        let entry = LevelSegment {
            tau: c.tau,
            w,
            delta: c.delta,
            binding: c.binding,
        };
        match segments.last_mut() {
            Some(prev) if (prev.w - w).abs() <= MERGE_TOL * prev.w.max(w) => *prev = entry,
            _ => segments.push(entry),
        }
        offset = c.tau;
        delivered = c.delta;
    }
    (actions, WaterPlan { segments })
}

pub fn schedule_fading<M: PowerModel + ?Sized>(
    instance: &Instance,
    model: &M,
) -> Result<(Schedule, WaterPlan), SolveError> {
    check_feasible(instance)?;
    let rho = instance.circuit().effective_rho()?;
    let (actions, plan) = water_actions(instance, model, rho);
    Ok((Schedule::assemble(instance, model, actions)?, plan))
}
