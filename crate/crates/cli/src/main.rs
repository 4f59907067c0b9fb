//! `eesched`: solve, verify, simulate and benchmark energy-optimal schedules.
//!
//! Exit codes: 0 success, 1 infeasible instance, 2 I/O, parse or usage error,
//! 3 a schedule that fails verification.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use eesched_core::bench::{
    run_energy_comparison, run_scaling, ChannelModel, TrialConfig, DEFAULT_MAX_RATE, DEFAULT_SEED,
};
use eesched_core::error::{FeasibilityError, OnlineError, SolveError, VerifyError};
use eesched_core::io::{
    curve_to_csv, event_log_to_csv, parse_instance, schedule_from_csv, schedule_to_csv,
    scaling_rows_to_csv, step_vertices, trial_rows_to_csv, Plan,
};
use eesched_core::model::{check_feasible, cumulative_curves, departure_curve, Instance};
use eesched_core::online::{simulate_online, stream_from_instance, ChannelProfile, OnlineConfig, Planner};
use eesched_core::power::{CircuitParams, Shannon};
use eesched_core::schedule::Schedule;
use eesched_core::taut_fading::schedule_fading;
use eesched_core::taut_static::schedule_static;
use eesched_core::verify::{verify_schedule, water_plan_is_monotone};

#[derive(Debug, Parser)]
#[command(name = "eesched", version, about = "Energy-optimal transmission scheduling under circuit power")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ChannelKind {
    Static,
    Rayleigh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CurveKind {
    Arrival,
    MinimumDeparture,
    Departure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlannerKind {
    Current,
    Known,
}

#[derive(Debug, clap::Args)]
struct Output {
    /// Destination file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimal schedule for a time-invariant channel.
    SolveStatic {
        #[arg(long)]
        instance: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Optimal schedule for a per-epoch (fading) channel.
    SolveFading {
        #[arg(long)]
        instance: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Check a schedule file against an instance; the report is JSON.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        schedule: PathBuf,
        /// Oracle grid resolution (instances with at most 8 epochs).
        #[arg(long, default_value_t = 400)]
        grid_points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the online rescheduling scheme on the instance's arrivals.
    SimulateOnline {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = PlannerKind::Current)]
        planner: PlannerKind,
        #[command(flatten)]
        output: Output,
    },
    /// Paired energy comparison of the optimal, heuristic and online schemes.
    BenchEnergy {
        /// Horizon T in seconds.
        #[arg(long, default_value_t = 60.0)]
        horizon: f64,
        #[arg(long, value_enum, default_value_t = ChannelKind::Static)]
        channel: ChannelKind,
        /// Static gain, or mean power gain of the Rayleigh channel.
        #[arg(long, default_value_t = 2.0)]
        gain: f64,
        #[arg(long, default_value_t = 40.0)]
        total: f64,
        #[arg(long, default_value_t = 3.0)]
        rho: f64,
        /// Mean gap between events; T/10 when omitted.
        #[arg(long)]
        mean_gap: Option<f64>,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MAX_RATE)]
        max_rate: f64,
        /// Worker threads; all cores when omitted. Results do not depend on it.
        #[arg(long)]
        jobs: Option<usize>,
        /// Fill the runtime_ms column (makes the output run-dependent).
        #[arg(long)]
        timings: bool,
        /// Also write the ratio summary as JSON here.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Median solve time against the number of arrival and deadline events.
    BenchScaling {
        #[arg(long, value_delimiter = ',', default_values_t = vec![16usize, 32, 64, 128])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 21)]
        reps: usize,
        #[arg(long, value_enum, default_value_t = ChannelKind::Static)]
        channel: ChannelKind,
        #[arg(long, default_value_t = 2.0)]
        gain: f64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Arrival, minimum-departure or optimal departure curve as `t,value`.
    Curves {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = CurveKind::Departure)]
        curve: CurveKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn io(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 2, error: error.into() }
    }

    fn infeasible(error: FeasibilityError) -> Self {
        Failure { code: 1, error: error.into() }
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Infeasible(f) => Failure::infeasible(f),
            other => Failure::io(other),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::io)
}

fn load_instance(path: &Path) -> CliResult<Instance> {
    let text = read_text(path)?;
    parse_instance(&text)
        .with_context(|| format!("invalid instance {}", path.display()))
        .map_err(Failure::io)
}

/// Writes through a temporary file in the destination directory and renames
/// it into place, so readers never see a partial file.
fn emit(out: Option<&Path>, contents: &str) -> CliResult<()> {
    let Some(path) = out else {
        std::io::stdout().write_all(contents.as_bytes()).map_err(Failure::io)?;
        return Ok(());
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a file in {}", dir.display()))
        .map_err(Failure::io)?;
    tmp.write_all(contents.as_bytes()).map_err(Failure::io)?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::io)?;
    Ok(())
}

fn pretty(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON value serializes");
    s.push('\n');
    s
}

fn schedule_json(instance: &Instance, schedule: &Schedule, plan: serde_json::Value) -> serde_json::Value {
    json!({
        "energy": schedule.reported_energy(instance),
        "objective": schedule.total_energy(),
        "actions": schedule.actions(),
        "plan": plan,
    })
}

fn solve(instance_path: &Path, output: &Output, fading: bool) -> CliResult<()> {
    let instance = load_instance(instance_path)?;
    let (schedule, plan) = if fading {
        let (s, p) = schedule_fading(&instance, &Shannon)?;
        (s, Plan::Fading(p))
    } else {
        let (s, p) = schedule_static(&instance, &Shannon)?;
        (s, Plan::Static(p))
    };
    let text = match output.format {
        Format::Csv => schedule_to_csv(&instance, &schedule, Some(&plan)).map_err(Failure::io)?,
        Format::Json => {
            let plan = match &plan {
                Plan::Static(p) => serde_json::to_value(p),
                Plan::Fading(p) => serde_json::to_value(p),
            }
            .map_err(Failure::io)?;
            pretty(&schedule_json(&instance, &schedule, plan))
        }
    };
    emit(output.out.as_deref(), &text)?;
    if output.out.is_some() {
        println!("energy {} J", eesched_core::io::format_energy(schedule.reported_energy(&instance)));
    }
    Ok(())
}

fn verify(instance_path: &Path, schedule_path: &Path, grid_points: usize, out: Option<&Path>) -> CliResult<()> {
    let instance = load_instance(instance_path)?;
    let text = read_text(schedule_path)?;
    let (schedule, plan) = schedule_from_csv(&text, &instance, &Shannon)
        .with_context(|| format!("invalid schedule {}", schedule_path.display()))
        .map_err(Failure::io)?;
    check_feasible(&instance).map_err(Failure::infeasible)?;
    let static_plan = match &plan {
        Some(Plan::Static(p)) => Some(p),
        _ => None,
    };
    let report = verify_schedule(&instance, &Shannon, &schedule, static_plan, grid_points)
        .map_err(|e| match e {
            VerifyError::Infeasible(f) => Failure::infeasible(f),
            other => Failure::io(other),
        })?;
    let mut value = serde_json::to_value(&report).map_err(Failure::io)?;
    if let Some(Plan::Fading(p)) = &plan {
        value["plan_monotone"] = json!(water_plan_is_monotone(p));
    }
    let water_ok = value["plan_monotone"].as_bool().unwrap_or(true);
    emit(out, &pretty(&value))?;
    if report.pass && water_ok {
        Ok(())
    } else {
        Err(Failure {
            code: 3,
            error: anyhow!("schedule failed verification"),
        })
    }
}

fn simulate(instance_path: &Path, planner: PlannerKind, output: &Output) -> CliResult<()> {
    let instance = load_instance(instance_path)?;
    check_feasible(&instance).map_err(Failure::infeasible)?;
    let config = OnlineConfig {
        channel: ChannelProfile::from_instance(&instance),
        circuit: *instance.circuit(),
        planner: match planner {
            PlannerKind::Current => Planner::CurrentGain,
            PlannerKind::Known => Planner::KnownChannel,
        },
    };
    let outcome = simulate_online(&stream_from_instance(&instance), &config, &Shannon).map_err(|e| match e {
        OnlineError::Planner {
            source: SolveError::Infeasible(_),
            ..
        }
        | OnlineError::InfeasibleUpdate { .. } => Failure { code: 1, error: e.into() },
        other => Failure::io(other),
    })?;
    let text = match output.format {
        Format::Csv => event_log_to_csv(&outcome.log).map_err(Failure::io)?,
        Format::Json => pretty(&json!({
            "energy": outcome.energy,
            "objective": outcome.objective,
            "departed": outcome.departed,
            "log": outcome.log,
        })),
    };
    emit(output.out.as_deref(), &text)
}

fn channel_model(kind: ChannelKind, gain: f64) -> ChannelModel {
    match kind {
        ChannelKind::Static => ChannelModel::Static { gain },
        ChannelKind::Rayleigh => ChannelModel::Rayleigh { mean_power: gain },
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::SolveStatic { instance, output } => solve(&instance, &output, false),
        Command::SolveFading { instance, output } => solve(&instance, &output, true),
        Command::Verify {
            instance,
            schedule,
            grid_points,
            out,
        } => verify(&instance, &schedule, grid_points, out.as_deref()),
        Command::SimulateOnline {
            instance,
            planner,
            output,
        } => simulate(&instance, planner, &output),
        Command::BenchEnergy {
            horizon,
            channel,
            gain,
            total,
            rho,
            mean_gap,
            trials,
            seed,
            max_rate,
            jobs,
            timings,
            summary,
            output,
        } => {
            let config = TrialConfig {
                horizon,
                total,
                mean_gap: mean_gap.unwrap_or(horizon / 10.0),
                channel: channel_model(channel, gain),
                circuit: CircuitParams::new(rho, 1.0, 0.0).map_err(Failure::io)?,
                trials,
                seed,
                max_rate,
            };
            let report = run_energy_comparison(&config, &Shannon, jobs).map_err(Failure::io)?;
            let summary_json = json!({ "config": report.config, "summary": report.summary });
            let text = match output.format {
                Format::Csv => trial_rows_to_csv(&report.rows, timings).map_err(Failure::io)?,
                Format::Json => {
                    let mut v = serde_json::to_value(&report).map_err(Failure::io)?;
                    if !timings {
                        for row in v["rows"].as_array_mut().into_iter().flatten() {
                            row["runtime_ms"] = serde_json::Value::Null;
                        }
                    }
                    pretty(&v)
                }
            };
            emit(output.out.as_deref(), &text)?;
            if let Some(path) = summary {
                emit(Some(&path), &pretty(&summary_json))?;
            }
            Ok(())
        }
        Command::BenchScaling {
            sizes,
            reps,
            channel,
            gain,
            seed,
            output,
        } => {
            if sizes.iter().any(|&k| k < 2) {
                return Err(Failure::io(anyhow!("every size must be at least 2 events")));
            }
            let rows = run_scaling(&sizes, reps, seed, channel_model(channel, gain), &Shannon);
            let text = match output.format {
                Format::Csv => scaling_rows_to_csv(&rows).map_err(Failure::io)?,
                Format::Json => pretty(&serde_json::to_value(&rows).map_err(Failure::io)?),
            };
            emit(output.out.as_deref(), &text)
        }
        Command::Curves { instance, curve, out } => {
            let inst = load_instance(&instance)?;
            let points = match curve {
                CurveKind::Arrival => step_vertices(&cumulative_curves(&inst).0),
                CurveKind::MinimumDeparture => step_vertices(&cumulative_curves(&inst).1),
                CurveKind::Departure => {
                    let schedule = match inst.channel().static_gain() {
                        Some(_) => schedule_static(&inst, &Shannon)?.0,
                        None => schedule_fading(&inst, &Shannon)?.0,
                    };
                    departure_curve(&schedule, inst.grid()).map_err(Failure::io)?.points
                }
            };
            emit(out.as_deref(), &curve_to_csv(&points).map_err(Failure::io)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

