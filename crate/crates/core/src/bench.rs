//! Random trial generation and the energy / runtime experiments.

use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::BenchError;
use crate::heuristics::{heuristic1, heuristic2, heuristic2_fading, heuristic3};
use crate::model::{check_feasible, ChannelTrace, EpochGrid, Event, Instance};
use crate::online::{simulate_online, stream_from_instance, ChannelProfile, OnlineConfig, Planner};
use crate::power::{CircuitParams, PowerModel};
use crate::taut_fading::schedule_fading;
use crate::taut_static::schedule_static;

pub const DEFAULT_SEED: u64 = 0x5EED_2015;
pub const MAX_ATTEMPTS: usize = 1000;
/// Generated instances whose unavoidable peak rate exceeds this are redrawn;
/// it keeps `exp(rate)` energies finite and meaningful.
pub const DEFAULT_MAX_RATE: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ChannelModel {
    Static { gain: f64 },
    /// Per-second power gains, exponential with this mean.
    Rayleigh { mean_power: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialConfig {
    pub horizon: f64,
    pub total: f64,
    pub mean_gap: f64,
    pub channel: ChannelModel,
    pub circuit: CircuitParams,
    pub trials: usize,
    pub seed: u64,
    pub max_rate: f64,
}

impl TrialConfig {
    /// G = 40, rho = 3, mean gap T/10, 50 trials.
    pub fn standard(horizon: f64, channel: ChannelModel) -> Self {
        TrialConfig {
            horizon,
            total: 40.0,
            mean_gap: horizon / 10.0,
            channel,
            circuit: CircuitParams::on_power(3.0),
            trials: 50,
            seed: DEFAULT_SEED,
            max_rate: DEFAULT_MAX_RATE,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::InvalidConfig(m.to_string()));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon must be positive");
        }
        if !(self.mean_gap > 0.0 && self.mean_gap < self.horizon) {
            return bad("mean gap must lie in (0, T)");
        }
        if !(self.total > 0.0 && self.total.is_finite()) {
            return bad("total data must be positive");
        }
        if self.trials == 0 {
            return bad("at least one trial is required");
        }
        match self.channel {
            ChannelModel::Static { gain } if !(gain > 0.0) => return bad("gain must be positive"),
            ChannelModel::Rayleigh { mean_power } if !(mean_power > 0.0) => {
                return bad("mean power must be positive")
            }
            _ => {}
        }
        self.circuit
            .effective_rho()
            .map_err(|e| BenchError::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}

/// Renewal process on `[0, T)` with gaps uniform on `[0, 2 mean_gap]`.
fn renewal_times<R: Rng + ?Sized>(rng: &mut R, horizon: f64, mean_gap: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += rng.random_range(0.0..=2.0 * mean_gap);
        if t >= horizon {
            return out;
        }
        if out.last().map_or(t > 0.0, |&p| t > p) {
            out.push(t);
        }
    }
}

/// `total` split by a flat Dirichlet draw; the last share absorbs rounding.
fn split<R: Rng + ?Sized>(rng: &mut R, total: f64, parts: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..parts).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let sum: f64 = draws.iter().sum();
    let mut shares: Vec<f64> = draws.iter().map(|d| total * d / sum).collect();
    let head: f64 = shares[..parts - 1].iter().sum();
    shares[parts - 1] = (total - head).max(0.0);
    shares
}

/// Lower bound on the peak rate any feasible schedule needs:
/// `max (Dm_j - U_i) / (t_delta_j - t_alpha_i)` over arrival-deadline pairs.
pub fn peak_rate_bound(instance: &Instance) -> f64 {
    let grid = instance.grid();
    let mut best = 0.0f64;
    let mut before = 0.0;
    for a in instance.arrivals() {
        let mut demand = 0.0;
        for d in instance.deadlines() {
            demand += d.amount;
            if d.epoch > a.epoch {
                best = best.max((demand - before) / (grid.time(d.epoch) - grid.time(a.epoch)));
            }
        }
        before += a.amount;
    }
    best
}

pub fn generate_instance<R: Rng + ?Sized>(config: &TrialConfig, rng: &mut R) -> Result<Instance, BenchError> {
    config.validate()?;
    let t_end = config.horizon;
    for _ in 0..MAX_ATTEMPTS {
        let mut arrival_times = vec![0.0];
        arrival_times.extend(renewal_times(rng, t_end, config.mean_gap));
        let mut deadline_times = renewal_times(rng, t_end, config.mean_gap);
        deadline_times.push(t_end);

        let seconds: Vec<f64> = match config.channel {
            ChannelModel::Static { .. } => Vec::new(),
            ChannelModel::Rayleigh { .. } => (1..t_end.ceil() as usize).map(|s| s as f64).collect(),
        };
        let mut bounds: Vec<f64> = arrival_times
            .iter()
            .chain(&deadline_times)
            .chain(&seconds)
            .copied()
            .collect();
        bounds.push(t_end);
        bounds.sort_by(f64::total_cmp);
        bounds.dedup();
        let index = |t: f64| bounds.partition_point(|&b| b < t);

        let arrivals: Vec<Event> = arrival_times
            .iter()
            .zip(split(rng, config.total, arrival_times.len()))
            .map(|(&t, a)| Event::new(index(t), a))
            .collect();
        let deadlines: Vec<Event> = deadline_times
            .iter()
            .zip(split(rng, config.total, deadline_times.len()))
            .map(|(&t, d)| Event::new(index(t), d))
            .collect();
        let channel = match config.channel {
            ChannelModel::Static { gain } => ChannelTrace::Static(gain),
            ChannelModel::Rayleigh { mean_power } => {
                let exp = Exp::new(1.0 / mean_power).expect("positive mean power");
                let per_second: Vec<f64> = (0..t_end.ceil() as usize)
                    .map(|_| rng.sample::<f64, _>(exp).max(f64::MIN_POSITIVE))
                    .collect();
                ChannelTrace::PerEpoch(
                    bounds[..bounds.len() - 1]
                        .iter()
                        .map(|&t| per_second[t.floor() as usize])
                        .collect(),
                )
            }
        };
        let grid = EpochGrid::new(bounds.clone()).expect("sorted distinct boundaries");
        let instance = match Instance::new(grid, arrivals, deadlines, channel, config.circuit) {
            Ok(i) => i,
            Err(_) => continue,
        };
        if check_feasible(&instance).is_ok() && peak_rate_bound(&instance) <= config.max_rate {
            return Ok(instance);
        }
    }
    Err(BenchError::GenerationFailed {
        attempts: MAX_ATTEMPTS,
    })
}

/// Per-trial seeds, fixed by the master seed alone.
pub fn trial_seeds(master: u64, trials: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..trials).map(|_| rng.next_u64()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Optimal,
    Heuristic1,
    Heuristic2,
    Heuristic3,
    Online,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Optimal => "optimal",
            Scheme::Heuristic1 => "heuristic1",
            Scheme::Heuristic2 => "heuristic2",
            Scheme::Heuristic3 => "heuristic3",
            Scheme::Online => "online",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub horizon: f64,
    pub scheme: Scheme,
    /// Joules.
    pub energy: f64,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    pub mean_energy: f64,
    /// Arithmetic mean over trials of `E_scheme / E_optimal`.
    pub mean_ratio: f64,
    pub geometric_mean_ratio: f64,
    /// `mean_energy / mean optimal energy`.
    pub ratio_of_means: f64,
    /// Trials where this scheme beat the optimum by more than 1e-9 relative.
    pub dominance_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub config: TrialConfig,
    pub rows: Vec<TrialRow>,
    pub summary: Vec<SchemeSummary>,
}

impl ComparisonReport {
    pub fn scheme(&self, scheme: Scheme) -> Option<&SchemeSummary> {
        self.summary.iter().find(|s| s.scheme == scheme)
    }

    /// Per-trial energies of one scheme, in trial order.
    pub fn energies(&self, scheme: Scheme) -> Vec<f64> {
        self.rows.iter().filter(|r| r.scheme == scheme).map(|r| r.energy).collect()
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64() * 1e3)
}

/// Energies of every scheme on one instance, optimal first.
pub fn evaluate_schemes<M: PowerModel + ?Sized>(
    instance: &Instance,
    model: &M,
) -> Result<Vec<(Scheme, f64, f64)>, String> {
    let fading = instance.channel().static_gain().is_none();
    let s = |r: Result<crate::schedule::Schedule, crate::error::SolveError>| {
        r.map(|s| s.reported_energy(instance)).map_err(|e| e.to_string())
    };
    let mut out = Vec::new();
    let (opt, ms) = timed(|| {
        if fading {
            s(schedule_fading(instance, model).map(|x| x.0))
        } else {
            s(schedule_static(instance, model).map(|x| x.0))
        }
    });
    out.push((Scheme::Optimal, opt?, ms));
    let (e, ms) = timed(|| s(heuristic1(instance, model)));
    out.push((Scheme::Heuristic1, e?, ms));
    let (e, ms) = timed(|| {
        if fading {
            s(heuristic2_fading(instance, model))
        } else {
            s(heuristic2(instance, model))
        }
    });
    out.push((Scheme::Heuristic2, e?, ms));
    if fading {
        let (e, ms) = timed(|| s(heuristic3(instance, model)));
        out.push((Scheme::Heuristic3, e?, ms));
    }
    let config = OnlineConfig {
        channel: ChannelProfile::from_instance(instance),
        circuit: *instance.circuit(),
        planner: if fading { Planner::KnownChannel } else { Planner::CurrentGain },
    };
    let (e, ms) = timed(|| {
        simulate_online(&stream_from_instance(instance), &config, model)
            .map(|o| o.energy)
            .map_err(|e| e.to_string())
    });
    out.push((Scheme::Online, e?, ms));
    Ok(out)
}

fn summarize(rows: &[TrialRow], trials: usize) -> Vec<SchemeSummary> {
    let optimal: Vec<f64> = rows.iter().filter(|r| r.scheme == Scheme::Optimal).map(|r| r.energy).collect();
    let mean_opt = optimal.iter().sum::<f64>() / trials as f64;
    let mut schemes: Vec<Scheme> = rows.iter().map(|r| r.scheme).collect();
    schemes.sort();
    schemes.dedup();
    schemes
        .into_iter()
        .map(|scheme| {
            let energies: Vec<f64> = rows.iter().filter(|r| r.scheme == scheme).map(|r| r.energy).collect();
            let ratios: Vec<f64> = energies.iter().zip(&optimal).map(|(e, o)| e / o).collect();
            let n = ratios.len() as f64;
            let mean_energy = energies.iter().sum::<f64>() / n;
            SchemeSummary {
                scheme,
                mean_energy,
                mean_ratio: ratios.iter().sum::<f64>() / n,
                geometric_mean_ratio: (ratios.iter().map(|r| r.ln()).sum::<f64>() / n).exp(),
                ratio_of_means: mean_energy / mean_opt,
                dominance_violations: energies
                    .iter()
                    .zip(&optimal)
                    .filter(|(e, o)| **e < **o - 1e-9 * o.abs().max(1.0))
                    .count(),
            }
        })
        .collect()
}

/// Runs every trial of `config` on a pool of `jobs` workers (all cores when
/// `None`). Results do not depend on the number of workers.
pub fn run_energy_comparison<M: PowerModel + ?Sized>(
    config: &TrialConfig,
    model: &M,
    jobs: Option<usize>,
) -> Result<ComparisonReport, BenchError> {
    config.validate()?;
    let seeds = trial_seeds(config.seed, config.trials);
    let run = || {
        seeds
            .par_iter()
            .enumerate()
            .map(|(trial, &seed)| {
                let err = |message: String| BenchError::Trial { trial, seed, message };
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let instance = generate_instance(config, &mut rng).map_err(|e| err(e.to_string()))?;
                let results = evaluate_schemes(&instance, model).map_err(err)?;
                Ok(results
                    .into_iter()
                    .map(|(scheme, energy, runtime_ms)| TrialRow {
                        trial,
                        seed,
                        horizon: config.horizon,
                        scheme,
                        energy,
                        runtime_ms,
                    })
                    .collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>, BenchError>>()
    };
    let per_trial = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| BenchError::InvalidConfig(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    let rows: Vec<TrialRow> = per_trial.into_iter().flatten().collect();
    let summary = summarize(&rows, config.trials);
    Ok(ComparisonReport {
        config: config.clone(),
        rows,
        summary,
    })
}

/// Feasible instance with `events / 2` arrivals and as many deadlines at
/// uniform times on `[0, horizon]`, carrying `total` units.
pub fn scaling_instance<R: Rng + ?Sized>(
    rng: &mut R,
    events: usize,
    horizon: f64,
    total: f64,
    channel: ChannelModel,
    circuit: CircuitParams,
) -> Instance {
    let half = (events / 2).max(1);
    let mut draw = |k: usize| {
        let mut ts: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..horizon)).collect();
        ts.sort_by(f64::total_cmp);
        ts
    };
    let mut arrival_times = vec![0.0];
    arrival_times.extend(draw(half - 1).into_iter().filter(|&t| t > 0.0));
    let mut deadline_times = draw(half - 1);
    deadline_times.push(horizon);
    let mut bounds: Vec<f64> = vec![0.0];
    bounds.extend(arrival_times.iter().chain(&deadline_times));
    if let ChannelModel::Rayleigh { .. } = channel {
        bounds.extend((1..horizon.ceil() as usize).map(|s| s as f64));
    }
    bounds.sort_by(f64::total_cmp);
    bounds.dedup();
    let index = |t: f64| bounds.partition_point(|&b| b < t);

    let shares = split(rng, total, arrival_times.len());
    let arrivals: Vec<Event> = arrival_times.iter().zip(&shares).map(|(&t, &a)| Event::new(index(t), a)).collect();
    // Each deadline asks for a random part of what has arrived strictly before it.
    let mut deadlines = Vec::with_capacity(deadline_times.len());
    let mut prev = 0.0;
    for (j, &t) in deadline_times.iter().enumerate() {
        let k = index(t);
        let available: f64 = arrivals.iter().filter(|a| a.epoch < k).map(|a| a.amount).sum();
        let cum = if j + 1 == deadline_times.len() {
            total
        } else {
            (available * rng.random_range(0.3..1.0)).max(prev)
        };
        deadlines.push(Event::new(k, cum - prev));
        prev = cum;
    }
    let channel = match channel {
        ChannelModel::Static { gain } => ChannelTrace::Static(gain),
        ChannelModel::Rayleigh { mean_power } => {
            let exp = Exp::new(1.0 / mean_power).expect("positive mean power");
            let per_second: Vec<f64> = (0..horizon.ceil() as usize)
                .map(|_| rng.sample::<f64, _>(exp).max(f64::MIN_POSITIVE))
                .collect();
            ChannelTrace::PerEpoch(bounds[..bounds.len() - 1].iter().map(|&t| per_second[t.floor() as usize]).collect())
        }
    };
    let grid = EpochGrid::new(bounds.clone()).expect("sorted distinct boundaries");
    Instance::new(grid, arrivals, deadlines, channel, circuit).expect("constructed instance is well formed")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub events: usize,
    pub solver: String,
    /// Median wall time of one solve, in nanoseconds.
    pub median_ns: f64,
}

/// Median solve time per event count, `reps` random instances each.
pub fn run_scaling<M: PowerModel + ?Sized>(
    sizes: &[usize],
    reps: usize,
    seed: u64,
    channel: ChannelModel,
    model: &M,
) -> Vec<ScalingRow> {
    let fading = matches!(channel, ChannelModel::Rayleigh { .. });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sizes
        .iter()
        .map(|&events| {
            let mut times: Vec<f64> = (0..reps.max(1))
                .map(|_| {
                    let inst = scaling_instance(&mut rng, events, 1920.0, 40.0, channel, CircuitParams::on_power(3.0));
                    // Repeat short solves so timer resolution does not dominate.
                    let mut calls = 0u32;
                    let start = Instant::now();
                    loop {
                        let ok = if fading {
                            schedule_fading(&inst, model).is_ok()
                        } else {
                            schedule_static(&inst, model).is_ok()
                        };
                        assert!(ok, "scaling instance must be feasible");
                        calls += 1;
                        if start.elapsed().as_micros() >= 200 {
                            break;
                        }
                    }
                    start.elapsed().as_secs_f64() * 1e9 / calls as f64
                })
                .collect();
            times.sort_by(f64::total_cmp);
            ScalingRow {
                events,
                solver: if fading { "schedule_fading" } else { "schedule_static" }.to_string(),
                median_ns: times[times.len() / 2],
            }
        })
        .collect()
}
