//! Problem instances: epoch grid, arrival and deadline processes, channel trace,
//! plus feasibility and cumulative-curve bookkeeping.
//!
//! Event epochs are boundary indices: an event at epoch `k` happens at `t_k`.
//! Per-epoch vectors are 0-based, so entry `n - 1` belongs to epoch `n`,
//! the interval `(t_{n-1}, t_n]`.

use crate::error::{FeasibilityError, ModelError};
use crate::power::CircuitParams;

/// Absolute slack allowed on cumulative constraints, scaled by `max(1, G)`.
pub const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochGrid {
    boundaries: Vec<f64>,
}

impl EpochGrid {
    pub fn new(boundaries: Vec<f64>) -> Result<Self, ModelError> {
        if boundaries.len() < 2 || boundaries[0] != 0.0 {
            return Err(ModelError::EmptyGrid);
        }
        for k in 1..boundaries.len() {
            if !(boundaries[k].is_finite() && boundaries[k] > boundaries[k - 1]) {
                return Err(ModelError::NonIncreasingBoundary(k));
            }
        }
        Ok(EpochGrid { boundaries })
    }

    pub fn from_lengths(lengths: &[f64]) -> Result<Self, ModelError> {
        let mut b = Vec::with_capacity(lengths.len() + 1);
        b.push(0.0);
        let mut t = 0.0;
        for &l in lengths {
            t += l;
            b.push(t);
        }
        Self::new(b)
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Number of epochs `N`.
    pub fn epochs(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn time(&self, k: usize) -> f64 {
        self.boundaries[k]
    }

    pub fn horizon(&self) -> f64 {
        self.boundaries[self.epochs()]
    }

    /// Length of the epoch stored at vector index `n` (epoch `n + 1`).
    pub fn length(&self, n: usize) -> f64 {
        self.boundaries[n + 1] - self.boundaries[n]
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.boundaries.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub epoch: usize,
    pub amount: f64,
}

impl Event {
    pub fn new(epoch: usize, amount: f64) -> Self {
        Event { epoch, amount }
    }
}

/// Arrivals `(alpha_i, a_i)`, always ending with the terminal `(N, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalProcess {
    events: Vec<Event>,
}

impl ArrivalProcess {
    /// Validates ordering against an `N`-epoch grid. A missing terminal
    /// `(N, 0)` event is appended; a missing `(0, 0)` is prepended.
    pub fn new(mut events: Vec<Event>, n: usize) -> Result<Self, ModelError> {
        let bad = |index, reason: &str| ModelError::BadArrival {
            index,
            reason: reason.to_string(),
        };
        if events.first().is_none_or(|e| e.epoch != 0) {
            events.insert(0, Event::new(0, 0.0));
        }
        if events.last().is_none_or(|e| e.epoch != n) {
            events.push(Event::new(n, 0.0));
        }
        for (i, e) in events.iter().enumerate() {
            if !(e.amount.is_finite() && e.amount >= 0.0) {
                return Err(bad(i, "amount must be finite and non-negative"));
            }
            if e.epoch > n {
                return Err(bad(i, "epoch beyond the grid"));
            }
            if i > 0 && e.epoch <= events[i - 1].epoch {
                return Err(bad(i, "epochs must be strictly increasing"));
            }
        }
        if events[events.len() - 1].amount != 0.0 {
            return Err(bad(events.len() - 1, "nothing may arrive at the horizon"));
        }
        Ok(ArrivalProcess { events })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Total data `G`.
    pub fn total(&self) -> f64 {
        self.events.iter().map(|e| e.amount).sum()
    }
}

/// Deadlines `(delta_j, d_j)`; the last one sits at the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct DeadlineProcess {
    events: Vec<Event>,
}

impl DeadlineProcess {
    pub fn new(events: Vec<Event>, n: usize) -> Result<Self, ModelError> {
        let bad = |index, reason: &str| ModelError::BadDeadline {
            index,
            reason: reason.to_string(),
        };
        if events.is_empty() {
            return Err(bad(0, "at least one deadline is required"));
        }
        for (j, e) in events.iter().enumerate() {
            if !(e.amount.is_finite() && e.amount >= 0.0) {
                return Err(bad(j + 1, "amount must be finite and non-negative"));
            }
            if e.epoch == 0 || e.epoch > n {
                return Err(bad(j + 1, "epoch must lie in 1..=N"));
            }
            if j > 0 && e.epoch <= events[j - 1].epoch {
                return Err(bad(j + 1, "epochs must be strictly increasing"));
            }
        }
        if events[events.len() - 1].epoch != n {
            return Err(bad(events.len(), "the last deadline must be at the horizon"));
        }
        Ok(DeadlineProcess { events })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn total(&self) -> f64 {
        self.events.iter().map(|e| e.amount).sum()
    }
}

/// Channel power gains `g = |h|^2`, constant or one per epoch.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelTrace {
    Static(f64),
    PerEpoch(Vec<f64>),
}

impl ChannelTrace {
    fn validate(&self, n: usize) -> Result<(), ModelError> {
        let ok = |g: f64| g.is_finite() && g > 0.0;
        match self {
            ChannelTrace::Static(g) if !ok(*g) => {
                Err(ModelError::BadChannel(format!("gain {g} must be finite and positive")))
            }
            ChannelTrace::PerEpoch(gs) if gs.len() != n => Err(ModelError::BadChannel(format!(
                "{} gains for {n} epochs",
                gs.len()
            ))),
            ChannelTrace::PerEpoch(gs) => match gs.iter().position(|&g| !ok(g)) {
                Some(k) => Err(ModelError::BadChannel(format!("gain of epoch {} is {}", k + 1, gs[k]))),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }

    /// Gain of the epoch at vector index `n`.
    pub fn gain(&self, n: usize) -> f64 {
        match self {
            ChannelTrace::Static(g) => *g,
            ChannelTrace::PerEpoch(gs) => gs[n],
        }
    }

    /// The common gain if every epoch sees the same channel.
    pub fn static_gain(&self) -> Option<f64> {
        match self {
            ChannelTrace::Static(g) => Some(*g),
            ChannelTrace::PerEpoch(gs) => {
                let g = gs[0];
                gs.iter().all(|&x| x == g).then_some(g)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    grid: EpochGrid,
    arrivals: ArrivalProcess,
    deadlines: DeadlineProcess,
    channel: ChannelTrace,
    circuit: CircuitParams,
}

impl Instance {
    pub fn new(
        grid: EpochGrid,
        arrivals: Vec<Event>,
        deadlines: Vec<Event>,
        channel: ChannelTrace,
        circuit: CircuitParams,
    ) -> Result<Self, ModelError> {
        let n = grid.epochs();
        let arrivals = ArrivalProcess::new(arrivals, n)?;
        let deadlines = DeadlineProcess::new(deadlines, n)?;
        channel.validate(n)?;
        Ok(Instance {
            grid,
            arrivals,
            deadlines,
            channel,
            circuit,
        })
    }

    pub fn grid(&self) -> &EpochGrid {
        &self.grid
    }

    pub fn arrivals(&self) -> &[Event] {
        self.arrivals.events()
    }

    pub fn deadlines(&self) -> &[Event] {
        self.deadlines.events()
    }

    pub fn channel(&self) -> &ChannelTrace {
        &self.channel
    }

    pub fn circuit(&self) -> &CircuitParams {
        &self.circuit
    }

    pub fn epochs(&self) -> usize {
        self.grid.epochs()
    }

    pub fn total_data(&self) -> f64 {
        self.arrivals.total()
    }

    pub fn gains(&self) -> Vec<f64> {
        (0..self.epochs()).map(|n| self.channel.gain(n)).collect()
    }

    pub fn with_channel(&self, channel: ChannelTrace) -> Result<Self, ModelError> {
        channel.validate(self.epochs())?;
        Ok(Instance {
            channel,
            ..self.clone()
        })
    }

    pub fn with_circuit(&self, circuit: CircuitParams) -> Self {
        Instance {
            circuit,
            ..self.clone()
        }
    }

    /// Absolute tolerance used for all cumulative-constraint comparisons.
    pub fn tolerance(&self) -> f64 {
        FEAS_TOL * self.total_data().max(1.0)
    }
}

/// Data that must arrive strictly before each deadline is available in time,
/// and arrivals balance deadlines.
pub fn check_feasible(instance: &Instance) -> Result<(), FeasibilityError> {
    let tol = instance.tolerance();
    let arrivals = instance.arrivals();
    let total_a = instance.total_data();
    let total_d: f64 = instance.deadlines().iter().map(|d| d.amount).sum();
    if (total_a - total_d).abs() > tol {
        return Err(FeasibilityError::TotalsMismatch {
            arrivals: total_a,
            deadlines: total_d,
        });
    }
    let mut demand = 0.0;
    let mut available = 0.0;
    let mut i = 0;
    for (j, d) in instance.deadlines().iter().enumerate() {
        demand += d.amount;
        while i < arrivals.len() && arrivals[i].epoch < d.epoch {
            available += arrivals[i].amount;
            i += 1;
        }
        if demand > available + tol {
            return Err(FeasibilityError::InfeasibleDemand {
                deadline: j + 1,
                epoch: d.epoch,
                demand,
                available,
            });
        }
    }
    Ok(())
}

/// Right-continuous step function given by its jump points.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCurve {
    pub points: Vec<(f64, f64)>,
}

impl StepCurve {
    pub fn value_at(&self, t: f64) -> f64 {
        self.points
            .iter()
            .take_while(|p| p.0 <= t)
            .last()
            .map_or(0.0, |p| p.1)
    }

    pub fn final_value(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.1)
    }
}

/// Continuous piecewise-linear curve through its breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    pub points: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn value_at(&self, t: f64) -> f64 {
        let pts = &self.points;
        if pts.is_empty() {
            return 0.0;
        }
        if t <= pts[0].0 {
            return pts[0].1;
        }
        for w in pts.windows(2) {
            let ((t0, v0), (t1, v1)) = (w[0], w[1]);
            if t <= t1 {
                if t1 == t0 {
                    return v1;
                }
                return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
            }
        }
        pts[pts.len() - 1].1
    }
}

/// Arrival curve `A(t)` and minimum departure curve `D_min(t)`.
pub fn cumulative_curves(instance: &Instance) -> (StepCurve, StepCurve) {
    let grid = instance.grid();
    let arrivals = instance.arrivals();
    let mut acc = 0.0;
    let a = arrivals[..arrivals.len() - 1]
        .iter()
        .map(|e| {
            acc += e.amount;
            (grid.time(e.epoch), acc)
        })
        .collect();
    let mut acc = 0.0;
    let d = instance
        .deadlines()
        .iter()
        .map(|e| {
            acc += e.amount;
            (grid.time(e.epoch), acc)
        })
        .collect();
    (StepCurve { points: a }, StepCurve { points: d })
}

/// Breakpoints of the departure curve of `schedule`, with each epoch's on
/// period placed at its head.
pub fn departure_curve(
    schedule: &crate::schedule::Schedule,
    grid: &EpochGrid,
) -> Result<PiecewiseLinear, ModelError> {
    if schedule.epochs() != grid.epochs() {
        return Err(ModelError::DimensionMismatch {
            expected: grid.epochs(),
            got: schedule.epochs(),
        });
    }
    let mut pts = vec![(0.0, 0.0)];
    let mut x = 0.0;
    for (n, a) in schedule.actions().iter().enumerate() {
        let start = grid.time(n);
        let len = grid.length(n);
        if a.on_time > 0.0 && a.on_time < len {
            x += a.phi;
            pts.push((start + a.on_time, x));
        } else {
            x += a.phi;
        }
        pts.push((grid.time(n + 1), x));
    }
    Ok(PiecewiseLinear { points: pts })
}

/// Constraint slacks of a per-epoch departure vector: `U_i - X(alpha_i)` for
/// every arrival and `X(delta_j) - Dm_j` for every deadline. Non-negative
/// slack means the constraint holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Slacks {
    pub causality: Vec<f64>,
    pub deadline: Vec<f64>,
}

impl Slacks {
    pub fn min(&self) -> f64 {
        self.causality
            .iter()
            .chain(&self.deadline)
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn constraint_slacks(instance: &Instance, phis: &[f64]) -> Slacks {
    let mut prefix = Vec::with_capacity(phis.len() + 1);
    prefix.push(0.0);
    for p in phis {
        prefix.push(prefix[prefix.len() - 1] + p);
    }
    let mut before = 0.0;
    let causality = instance
        .arrivals()
        .iter()
        .map(|e| {
            let s = before - prefix[e.epoch];
            before += e.amount;
            s
        })
        .collect();
    let mut demand = 0.0;
    let deadline = instance
        .deadlines()
        .iter()
        .map(|e| {
            demand += e.amount;
            prefix[e.epoch] - demand
        })
        .collect();
    Slacks { causality, deadline }
}
