//! Baseline policies the optimal schedules are compared against.

use crate::error::SolveError;
use crate::model::{check_feasible, Instance};
use crate::power::PowerModel;
use crate::schedule::{EpochAction, Schedule};
use crate::taut_fading::water_actions;
use crate::taut_static::taut_actions;
use crate::tautening::{constraint_events, Kind};

/// Always on, at the rate that makes the next event's constraint tight.
///
/// Before a deadline the rate meets the demand exactly; before an arrival it
/// drains the buffer. When both happen at the same instant the buffer is
/// drained, which also meets the deadline.
pub fn heuristic1<M: PowerModel + ?Sized>(
    instance: &Instance,
    model: &M,
) -> Result<Schedule, SolveError> {
    check_feasible(instance)?;
    let grid = instance.grid();
    let events = constraint_events(instance);
    let mut actions = Vec::with_capacity(instance.epochs());
    let (mut prev, mut departed) = (0, 0.0);
    let mut idx = 0;
    while idx < events.len() {
        let epoch = events[idx].epoch;
        let mut target = None;
        while idx < events.len() && events[idx].epoch == epoch {
            let e = events[idx];
            match e.kind {
                Kind::Arrival => target = Some(e.cumulative),
                Kind::Deadline if target.is_none() => target = Some(e.cumulative),
                Kind::Deadline => {}
            }
            idx += 1;
        }
        let target = target.unwrap_or(departed);
        let span = grid.time(epoch) - grid.time(prev);
        let rate = ((target - departed) / span).max(0.0);
        for k in prev..epoch {
            actions.push(if rate > 0.0 {
                EpochAction::new(rate, grid.length(k))
            } else {
                EpochAction::off()
            });
        }
        if rate > 0.0 {
            departed = target;
        }
        prev = epoch;
    }
    Ok(Schedule::assemble(instance, model, actions)?)
}

/// The ideal-circuit taut string (always on), priced with the real circuit.
pub fn heuristic2<M: PowerModel + ?Sized>(
    instance: &Instance,
    model: &M,
) -> Result<Schedule, SolveError> {
    let g = instance.channel().static_gain().ok_or(SolveError::NotStatic)?;
    check_feasible(instance)?;
    instance.circuit().effective_rho()?;
    let (actions, _) = taut_actions(instance, &model.ee_rate(g, 0.0));
    Ok(Schedule::assemble(instance, model, actions)?)
}

/// Ideal-circuit water-filling on a fading channel, priced with the real
/// circuit. This is what ignoring circuit power means once gains vary.
pub fn heuristic2_fading<M: PowerModel + ?Sized>(
    instance: &Instance,
    model: &M,
) -> Result<Schedule, SolveError> {
    check_feasible(instance)?;
    instance.circuit().effective_rho()?;
    let (actions, _) = water_actions(instance, model, 0.0);
    Ok(Schedule::assemble(instance, model, actions)?)
}

/// Time-weighted mean power gain of the trace.
pub fn mean_gain(instance: &Instance) -> f64 {
    let grid = instance.grid();
    let weighted: f64 = (0..instance.epochs())
        .map(|n| instance.channel().gain(n) * grid.length(n))
        .sum();
    weighted / grid.horizon()
}

/// The static optimum for the mean gain, priced on the true gains.
pub fn heuristic3<M: PowerModel + ?Sized>(
    instance: &Instance,
    model: &M,
) -> Result<Schedule, SolveError> {
    check_feasible(instance)?;
    let rho = instance.circuit().effective_rho()?;
    let (actions, _) = taut_actions(instance, &model.ee_rate(mean_gain(instance), rho));
    Ok(Schedule::assemble(instance, model, actions)?)
}
