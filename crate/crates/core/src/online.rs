//! Causal rescheduling: plan optimally for the data already buffered, follow
//! that plan, and replan from scratch whenever a new batch arrives.

use serde::{Deserialize, Serialize};

use crate::error::{OnlineError, SolveError};
use crate::model::{ChannelTrace, EpochGrid, Event, Instance};
use crate::power::{CircuitParams, PowerModel};
use crate::schedule::{EpochAction, Schedule};
use crate::taut_fading::schedule_fading;
use crate::taut_static::schedule_static;

/// Times closer than this are the same instant.
const TIME_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchDeadline {
    /// Absolute time.
    pub time: f64,
    pub amount: f64,
}

/// Data arriving at `time`, split across its own deadlines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub time: f64,
    pub amount: f64,
    pub deadlines: Vec<BatchDeadline>,
}

/// Piecewise-constant gain over absolute time.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelProfile {
    Static(f64),
    /// Gain `gains[k]` holds on `[boundaries[k], boundaries[k + 1])`; the last
    /// gain extends past the final boundary.
    Timed { boundaries: Vec<f64>, gains: Vec<f64> },
}

impl ChannelProfile {
    pub fn from_instance(instance: &Instance) -> Self {
        match instance.channel() {
            ChannelTrace::Static(g) => ChannelProfile::Static(*g),
            ChannelTrace::PerEpoch(gs) => ChannelProfile::Timed {
                boundaries: instance.grid().boundaries().to_vec(),
                gains: gs.clone(),
            },
        }
    }

    pub fn gain_at(&self, t: f64) -> f64 {
        match self {
            ChannelProfile::Static(g) => *g,
            ChannelProfile::Timed { boundaries, gains } => {
                let k = boundaries.partition_point(|&b| b <= t + TIME_EPS);
                gains[k.saturating_sub(1).min(gains.len() - 1)]
            }
        }
    }

    /// Gain changes strictly inside `(a, b)`.
    fn changes_within(&self, a: f64, b: f64) -> Vec<f64> {
        match self {
            ChannelProfile::Static(_) => Vec::new(),
            ChannelProfile::Timed { boundaries, gains } => boundaries[1..gains.len()]
                .iter()
                .copied()
                .filter(|&t| t > a + TIME_EPS && t < b - TIME_EPS)
                .collect(),
        }
    }

    /// `(start, end, gain)` pieces covering `[a, b]`.
    fn pieces(&self, a: f64, b: f64) -> Vec<(f64, f64, f64)> {
        let mut cuts = vec![a];
        cuts.extend(self.changes_within(a, b));
        cuts.push(b);
        cuts.windows(2).map(|w| (w[0], w[1], self.gain_at(w[0]))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Planner {
    /// Assume the gain seen at replanning time persists.
    #[default]
    CurrentGain,
    /// Plan with the true future gains (data causality is the only loss).
    KnownChannel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineConfig {
    pub channel: ChannelProfile,
    pub circuit: CircuitParams,
    pub planner: Planner,
}

/// The schedule being followed, on absolute times.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivePlan {
    pub boundaries: Vec<f64>,
    pub actions: Vec<EpochAction>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OnlineState {
    pub now: f64,
    pub buffer: f64,
    pub arrived: f64,
    pub departed: f64,
    /// Future deadlines in time order, absolute times.
    pub pending: Vec<BatchDeadline>,
    /// Demand of deadlines already passed.
    pub demand_met: f64,
    pub plan: Option<ActivePlan>,
    /// Objective energy `sum (P + rho_eff) l` spent so far.
    pub objective: f64,
    pub steps: usize,
}

impl OnlineState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Joules spent so far, as `CircuitParams::reported_energy` counts them.
    pub fn energy_so_far(&self, circuit: &CircuitParams) -> f64 {
        circuit.reported_energy(self.objective, self.now)
    }

    fn tolerance(&self) -> f64 {
        1e-9 * self.arrived.max(1.0)
    }

    /// Follows the active plan up to `until`, checking deadlines passed.
    fn advance<M: PowerModel + ?Sized>(
        &mut self,
        until: f64,
        config: &OnlineConfig,
        model: &M,
    ) -> Result<(), String> {
        let rho = config.circuit.effective_rho().map_err(|e| e.to_string())?;
        if let Some(plan) = &self.plan {
            for (k, a) in plan.actions.iter().enumerate() {
                if a.on_time <= 0.0 {
                    continue;
                }
                let (on_start, on_end) = (plan.boundaries[k], plan.boundaries[k] + a.on_time);
                let (s, e) = (on_start.max(self.now), on_end.min(until));
                if e <= s {
                    continue;
                }
                let whole = s <= on_start && e >= on_end;
                self.departed += if whole { a.phi } else { a.rate * (e - s) };
                for (p0, p1, g) in config.channel.pieces(s, e) {
                    self.objective += (model.power(a.rate, g) + rho) * (p1 - p0);
                }
            }
        }
        self.now = self.now.max(until);
        self.buffer = (self.arrived - self.departed).max(0.0);
        let tol = self.tolerance();
        while let Some(d) = self.pending.first().copied() {
            if d.time > self.now + TIME_EPS {
                break;
            }
            self.demand_met += d.amount;
            self.pending.remove(0);
            if self.departed + tol < self.demand_met {
                return Err(format!(
                    "deadline at t={} missed by {}",
                    d.time,
                    self.demand_met - self.departed
                ));
            }
        }
        Ok(())
    }

    fn replan<M: PowerModel + ?Sized>(&mut self, config: &OnlineConfig, model: &M) -> Result<(), SolveError> {
        if self.pending.is_empty() || self.buffer <= self.tolerance() {
            self.plan = None;
            return Ok(());
        }
        let t0 = self.now;
        let mut times: Vec<f64> = self.pending.iter().map(|d| d.time).collect();
        times.dedup_by(|a, b| (*a - *b).abs() <= TIME_EPS);
        let end = times[times.len() - 1];
        let mut cuts = vec![t0];
        cuts.extend(&times);
        if config.planner == Planner::KnownChannel {
            cuts.extend(config.channel.changes_within(t0, end));
            cuts.sort_by(f64::total_cmp);
            cuts.dedup_by(|a, b| (*a - *b).abs() <= TIME_EPS);
        }
        let rebased: Vec<f64> = cuts.iter().map(|t| t - t0).collect();
        let grid = EpochGrid::new(rebased).expect("replanning grid is increasing");

        // Residual demand at each pending deadline, measured from now.
        let mut deadlines = Vec::with_capacity(times.len());
        let mut demand = self.demand_met;
        let mut prev = 0.0;
        let mut p = 0;
        for (j, &t) in times.iter().enumerate() {
            while p < self.pending.len() && self.pending[p].time <= t + TIME_EPS {
                demand += self.pending[p].amount;
                p += 1;
            }
            let cum = if j + 1 == times.len() {
                self.buffer
            } else {
                (demand - self.departed).clamp(prev, self.buffer)
            };
            let epoch = cuts.iter().position(|&c| (c - t).abs() <= TIME_EPS).unwrap();
            deadlines.push(Event::new(epoch, cum - prev));
            prev = cum;
        }

        let channel = match config.planner {
            Planner::CurrentGain => ChannelTrace::Static(config.channel.gain_at(t0)),
            Planner::KnownChannel => {
                ChannelTrace::PerEpoch(cuts[..cuts.len() - 1].iter().map(|&t| config.channel.gain_at(t)).collect())
            }
        };
        let instance = Instance::new(grid, vec![Event::new(0, self.buffer)], deadlines, channel, config.circuit)
            .expect("replanning instance is well formed");
        let schedule: Schedule = match config.planner {
            Planner::CurrentGain => schedule_static(&instance, model)?.0,
            Planner::KnownChannel => schedule_fading(&instance, model)?.0,
        };
        self.plan = Some(ActivePlan {
            boundaries: cuts,
            actions: schedule.actions().to_vec(),
        });
        Ok(())
    }
}

/// Executes the current plan until the batch arrives, absorbs the batch and
/// replans for everything now buffered.
pub fn online_step<M: PowerModel + ?Sized>(
    state: &OnlineState,
    batch: &Batch,
    config: &OnlineConfig,
    model: &M,
) -> Result<OnlineState, OnlineError> {
    let index = state.steps;
    let fail = |reason: String| OnlineError::InfeasibleUpdate {
        index,
        time: batch.time,
        reason,
    };
    if batch.time < state.now - TIME_EPS {
        return Err(fail(format!("arrives before the current time {}", state.now)));
    }
    let mut next = state.clone();
    next.advance(batch.time, config, model).map_err(fail)?;
    let listed: f64 = batch.deadlines.iter().map(|d| d.amount).sum();
    if (listed - batch.amount).abs() > 1e-9 * batch.amount.max(1.0) {
        return Err(fail(format!("deadlines carry {listed} units, batch has {}", batch.amount)));
    }
    for d in &batch.deadlines {
        if d.amount > 0.0 && d.time <= next.now + TIME_EPS {
            return Err(fail(format!("deadline at t={} leaves no time to transmit", d.time)));
        }
    }
    next.arrived += batch.amount;
    next.buffer = (next.arrived - next.departed).max(0.0);
    for d in batch.deadlines.iter().filter(|d| d.amount > 0.0) {
        let at = next.pending.partition_point(|p| p.time <= d.time);
        next.pending.insert(at, *d);
    }
    next.replan(config, model)
        .map_err(|source| OnlineError::Planner { index, source })?;
    next.steps += 1;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogEntry {
    pub time: f64,
    pub event: String,
    pub buffer: f64,
    pub energy_so_far: f64,
    /// `(end time, rate)` of each planned epoch with data to send.
    pub plan: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineOutcome {
    /// Objective units, comparable with `Schedule::total_energy`.
    pub objective: f64,
    /// Joules, comparable with `Schedule::reported_energy`.
    pub energy: f64,
    pub departed: f64,
    pub log: Vec<LogEntry>,
}

fn log_entry(state: &OnlineState, event: &str, circuit: &CircuitParams) -> LogEntry {
    let plan = state.plan.as_ref().map_or(Vec::new(), |p| {
        p.actions
            .iter()
            .enumerate()
            .filter(|(_, a)| a.phi > 0.0)
            .map(|(k, a)| (p.boundaries[k + 1], a.rate))
            .collect()
    });
    LogEntry {
        time: state.now,
        event: event.to_string(),
        buffer: state.buffer,
        energy_so_far: state.energy_so_far(circuit),
        plan,
    }
}

/// Folds `online_step` over a time-ordered stream and runs the last plan out.
pub fn simulate_online<M: PowerModel + ?Sized>(
    stream: &[Batch],
    config: &OnlineConfig,
    model: &M,
) -> Result<OnlineOutcome, OnlineError> {
    let mut state = OnlineState::new();
    let mut log = Vec::with_capacity(stream.len() + 1);
    for batch in stream {
        state = online_step(&state, batch, config, model)?;
        log.push(log_entry(&state, "arrival", &config.circuit));
    }
    let end = state
        .plan
        .as_ref()
        .map_or(state.now, |p| p.boundaries[p.boundaries.len() - 1])
        .max(state.pending.last().map_or(state.now, |d| d.time));
    let index = state.steps;
    state
        .advance(end, config, model)
        .map_err(|reason| OnlineError::InfeasibleUpdate { index, time: end, reason })?;
    state.plan = None;
    log.push(log_entry(&state, "complete", &config.circuit));
    Ok(OnlineOutcome {
        objective: state.objective,
        energy: config.circuit.reported_energy(state.objective, state.now),
        departed: state.departed,
        log,
    })
}

/// Splits an offline instance into arrival batches, handing every batch the
/// deadlines it covers in first-in first-out order.
pub fn stream_from_instance(instance: &Instance) -> Vec<Batch> {
    let grid = instance.grid();
    let tol = 1e-12 * instance.total_data().max(1.0);
    let mut dl_cum = Vec::new();
    let mut acc = 0.0;
    for d in instance.deadlines() {
        dl_cum.push((acc, acc + d.amount, grid.time(d.epoch)));
        acc += d.amount;
    }
    let mut batches = Vec::new();
    let mut lo = 0.0;
    for a in instance.arrivals() {
        let hi = lo + a.amount;
        if a.amount > 0.0 {
            let mut deadlines: Vec<BatchDeadline> = dl_cum
                .iter()
                .filter_map(|&(d0, d1, t)| {
                    let overlap = hi.min(d1) - lo.max(d0);
                    (overlap > tol).then_some(BatchDeadline { time: t, amount: overlap })
                })
                .collect();
            // Rounding slivers go to the last deadline so the batch balances.
            let k = deadlines.len();
            if k == 0 {
                deadlines.push(BatchDeadline {
                    time: grid.horizon(),
                    amount: a.amount,
                });
            } else {
                let earlier: f64 = deadlines[..k - 1].iter().map(|d| d.amount).sum();
                deadlines[k - 1].amount = a.amount - earlier;
            }
            batches.push(Batch {
                time: grid.time(a.epoch),
                amount: a.amount,
                deadlines,
            });
        }
        lo = hi;
    }
    batches
}
