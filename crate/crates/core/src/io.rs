//! File formats: instance JSON, and the schedule, curve, event-log and bench
//! CSV tables.
//!
//! Times, rates and data amounts are written in shortest round-trip form so
//! a schedule read back is bit-identical; energies are Joules rounded to nine
//! significant digits.

use serde::{Deserialize, Serialize};

use crate::bench::{ScalingRow, TrialRow};
use crate::error::IoError;
use crate::model::{ChannelTrace, EpochGrid, Event, Instance, StepCurve};
use crate::online::LogEntry;
use crate::power::{CircuitParams, PowerModel};
use crate::schedule::{Binding, EpochAction, Schedule};
use crate::taut_fading::{LevelSegment, WaterPlan};
use crate::taut_static::{Segment, SegmentPlan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventDto {
    epoch: usize,
    amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum ChannelDto {
    Static { static_gain: f64 },
    PerEpoch { gains: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDto {
    boundaries: Vec<f64>,
    arrivals: Vec<EventDto>,
    deadlines: Vec<EventDto>,
    channel: ChannelDto,
    circuit: CircuitParams,
}

pub fn parse_instance(json: &str) -> Result<Instance, IoError> {
    let dto: InstanceDto = serde_json::from_str(json)?;
    dto.circuit.validate()?;
    let events = |v: Vec<EventDto>| v.into_iter().map(|e| Event::new(e.epoch, e.amount)).collect();
    let channel = match dto.channel {
        ChannelDto::Static { static_gain } => ChannelTrace::Static(static_gain),
        ChannelDto::PerEpoch { gains } => ChannelTrace::PerEpoch(gains),
    };
    Ok(Instance::new(
        EpochGrid::new(dto.boundaries)?,
        events(dto.arrivals),
        events(dto.deadlines),
        channel,
        dto.circuit,
    )?)
}

/// Pretty JSON; the implicit zero arrival at the horizon is left out.
pub fn instance_to_json(instance: &Instance) -> String {
    let n = instance.epochs();
    let dto = InstanceDto {
        boundaries: instance.grid().boundaries().to_vec(),
        arrivals: instance
            .arrivals()
            .iter()
            .filter(|e| !(e.epoch == n && e.amount == 0.0))
            .map(|e| EventDto { epoch: e.epoch, amount: e.amount })
            .collect(),
        deadlines: instance
            .deadlines()
            .iter()
            .map(|e| EventDto { epoch: e.epoch, amount: e.amount })
            .collect(),
        channel: match instance.channel() {
            ChannelTrace::Static(g) => ChannelDto::Static { static_gain: *g },
            ChannelTrace::PerEpoch(gs) => ChannelDto::PerEpoch { gains: gs.clone() },
        },
        circuit: *instance.circuit(),
    };
    let mut s = serde_json::to_string_pretty(&dto).expect("instance DTO serializes");
    s.push('\n');
    s
}

/// Nine significant digits; plain notation for everyday magnitudes.
pub fn format_energy(x: f64) -> String {
    if !x.is_finite() || x == 0.0 {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    if (1e-4..1e15).contains(&rounded.abs()) {
        format!("{rounded}")
    } else {
        format!("{x:.8e}")
    }
}

/// Plan attached to a schedule file as `#` comment rows.
#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    Static(SegmentPlan),
    Fading(WaterPlan),
}

#[derive(Debug, Deserialize)]
struct ScheduleRow {
    epoch: usize,
    rate: f64,
    on_time: f64,
    phi: f64,
}

fn csv_string(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<(), csv::Error>) -> Result<String, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write(&mut w)?;
    let bytes = w.into_inner().map_err(|e| IoError::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| IoError::Format(e.to_string()))
}

/// `epoch,rate,on_time,phi,energy[,gain]`, epochs numbered from 1. The gain
/// column appears for per-epoch channels.
pub fn schedule_to_csv(instance: &Instance, schedule: &Schedule, plan: Option<&Plan>) -> Result<String, IoError> {
    let circuit = instance.circuit();
    let fading = matches!(instance.channel(), ChannelTrace::PerEpoch(_));
    let mut out = csv_string(|w| {
        let mut header = vec!["epoch", "rate", "on_time", "phi", "energy"];
        if fading {
            header.push("gain");
        }
        w.write_record(&header)?;
        for (n, a) in schedule.actions().iter().enumerate() {
            let joules = a.energy / circuit.eta + circuit.beta * instance.grid().length(n);
            let mut row = vec![
                (n + 1).to_string(),
                a.rate.to_string(),
                a.on_time.to_string(),
                a.phi.to_string(),
                format_energy(joules),
            ];
            if fading {
                row.push(instance.channel().gain(n).to_string());
            }
            w.write_record(&row)?;
        }
        Ok(())
    })?;
    match plan {
        Some(Plan::Static(p)) => {
            out.push_str("# segment,tau,rate,delta,binding\n");
            for (k, s) in p.segments.iter().enumerate() {
                out.push_str(&format!("# {},{},{},{},{}\n", k + 1, s.tau, s.rate, s.delta, s.binding.as_str()));
            }
        }
        Some(Plan::Fading(p)) => {
            out.push_str("# segment,tau,water,delta,binding\n");
            for (k, s) in p.segments.iter().enumerate() {
                out.push_str(&format!("# {},{},{},{},{}\n", k + 1, s.tau, s.w, s.delta, s.binding.as_str()));
            }
        }
        None => {}
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct PlanRow {
    tau: usize,
    #[serde(default)]
    rate: Option<f64>,
    #[serde(default)]
    water: Option<f64>,
    delta: f64,
    binding: String,
}

fn parse_plan(text: &str) -> Result<Option<Plan>, IoError> {
    let body: String = text
        .lines()
        .filter_map(|l| l.strip_prefix('#'))
        .map(|l| format!("{}\n", l.trim()))
        .collect();
    if body.is_empty() {
        return Ok(None);
    }
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let water = reader.headers()?.iter().any(|h| h == "water");
    let mut segs = Vec::new();
    let mut levels = Vec::new();
    for row in reader.deserialize() {
        let row: PlanRow = row?;
        let binding: Binding = row.binding.parse().map_err(IoError::Format)?;
        let level = |v: Option<f64>, name: &str| v.ok_or_else(|| IoError::Format(format!("plan row lacks {name}")));
        if water {
            levels.push(LevelSegment {
                tau: row.tau,
                w: level(row.water, "water")?,
                delta: row.delta,
                binding,
            });
        } else {
            segs.push(Segment {
                tau: row.tau,
                rate: level(row.rate, "rate")?,
                delta: row.delta,
                binding,
            });
        }
    }
    Ok(Some(if water {
        Plan::Fading(WaterPlan { segments: levels })
    } else {
        Plan::Static(SegmentPlan { segments: segs })
    }))
}

/// Reads a schedule table back and re-prices it on `instance`; the energy
/// column is informational. Returns the comment-row plan when present.
pub fn schedule_from_csv<M: PowerModel + ?Sized>(
    text: &str,
    instance: &Instance,
    model: &M,
) -> Result<(Schedule, Option<Plan>), IoError> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let mut actions = Vec::new();
    for row in reader.deserialize() {
        let row: ScheduleRow = row?;
        if row.epoch != actions.len() + 1 {
            return Err(IoError::Format(format!(
                "epoch {} out of order, expected {}",
                row.epoch,
                actions.len() + 1
            )));
        }
        actions.push(EpochAction::with_phi(row.rate, row.on_time, row.phi));
    }
    if actions.len() != instance.epochs() {
        return Err(IoError::Format(format!(
            "schedule has {} epochs, instance has {}",
            actions.len(),
            instance.epochs()
        )));
    }
    let schedule = Schedule::assemble(instance, model, actions)?;
    Ok((schedule, parse_plan(text)?))
}

/// Vertices of a right-continuous staircase starting at `(0, 0)`.
pub fn step_vertices(curve: &StepCurve) -> Vec<(f64, f64)> {
    let mut pts = vec![(0.0, 0.0)];
    let mut level = 0.0;
    for &(t, v) in &curve.points {
        if t > 0.0 {
            pts.push((t, level));
        }
        if v != level || t == 0.0 {
            pts.push((t, v));
        }
        level = v;
    }
    pts.dedup();
    pts
}

pub fn curve_to_csv(points: &[(f64, f64)]) -> Result<String, IoError> {
    csv_string(|w| {
        w.write_record(["t", "value"])?;
        for (t, v) in points {
            w.write_record([t.to_string(), v.to_string()])?;
        }
        Ok(())
    })
}

pub fn event_log_to_csv(log: &[LogEntry]) -> Result<String, IoError> {
    csv_string(|w| {
        w.write_record(["time", "event", "buffer", "energy_so_far"])?;
        for e in log {
            w.write_record([e.time.to_string(), e.event.clone(), e.buffer.to_string(), format_energy(e.energy_so_far)])?;
        }
        Ok(())
    })
}

/// Per-trial energies. Wall times vary from run to run, so the
/// `runtime_ms` column stays empty unless `timings` is set.
pub fn trial_rows_to_csv(rows: &[TrialRow], timings: bool) -> Result<String, IoError> {
    csv_string(|w| {
        w.write_record(["trial", "seed", "T", "scheme", "energy", "runtime_ms"])?;
        for r in rows {
            w.write_record([
                r.trial.to_string(),
                r.seed.to_string(),
                r.horizon.to_string(),
                r.scheme.as_str().to_string(),
                format_energy(r.energy),
                if timings { format!("{:.3}", r.runtime_ms) } else { String::new() },
            ])?;
        }
        Ok(())
    })
}

pub fn scaling_rows_to_csv(rows: &[ScalingRow]) -> Result<String, IoError> {
    csv_string(|w| {
        w.write_record(["events", "solver", "median_ns"])?;
        for r in rows {
            w.write_record([r.events.to_string(), r.solver.clone(), format!("{:.0}", r.median_ns)])?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::power::Shannon;
    use crate::taut_fading::schedule_fading;
    use crate::taut_static::schedule_static;

    const TWO_DEADLINE: &str = r#"{
        "boundaries": [0, 1, 2],
        "arrivals": [{"epoch": 0, "amount": 4}],
        "deadlines": [{"epoch": 1, "amount": 3}, {"epoch": 2, "amount": 1}],
        "channel": {"static_gain": 1},
        "circuit": {"rho": 1, "eta": 1, "beta": 0}
    }"#;

    #[test]
    fn instance_json_round_trip() {
        let i = parse_instance(TWO_DEADLINE).unwrap();
        assert_eq!(i.epochs(), 2);
        assert_eq!(parse_instance(&instance_to_json(&i)).unwrap(), i);
        let f = i.with_channel(ChannelTrace::PerEpoch(vec![0.5, 3.0])).unwrap();
        assert_eq!(parse_instance(&instance_to_json(&f)).unwrap(), f);
    }

    #[test]
    fn bad_instances_are_rejected() {
        assert!(matches!(parse_instance("{"), Err(IoError::Json(_))));
        let unknown = TWO_DEADLINE.replace("\"beta\": 0", "\"beta\": 0, \"zeta\": 1");
        assert!(matches!(parse_instance(&unknown), Err(IoError::Json(_))));
        let eta = TWO_DEADLINE.replace("\"eta\": 1", "\"eta\": 2");
        assert!(matches!(parse_instance(&eta), Err(IoError::Power(_))));
        let order = TWO_DEADLINE.replace("[0, 1, 2]", "[0, 2, 1]");
        assert!(matches!(parse_instance(&order), Err(IoError::Model(_))));
    }

    #[test]
    fn energy_has_nine_significant_digits() {
        assert_eq!(format_energy(std::f64::consts::E), "2.71828183");
        assert_eq!(format_energy(0.0), "0");
        assert_eq!(format_energy(123456789012.0), "123456789000");
        assert_eq!(format_energy(2.5e20), "2.50000000e20");
        assert_eq!(format_energy(f64::INFINITY), "inf");
    }

    #[test]
    fn schedule_csv_round_trip() {
        let i = parse_instance(TWO_DEADLINE).unwrap();
        let (s, plan) = schedule_static(&i, &Shannon).unwrap();
        let text = schedule_to_csv(&i, &s, Some(&Plan::Static(plan.clone()))).unwrap();
        assert!(text.starts_with("epoch,rate,on_time,phi,energy\n1,3,1,3,"));
        assert!(text.contains("# segment,tau,rate,delta,binding\n# 1,1,3,3,deadline\n# 2,2,1,4,terminal\n"));
        let (back, p) = schedule_from_csv(&text, &i, &Shannon).unwrap();
        assert_eq!(back.actions(), s.actions());
        assert_eq!(p, Some(Plan::Static(plan)));
    }

    #[test]
    fn fading_csv_has_gain_and_water() {
        let i = parse_instance(TWO_DEADLINE)
            .unwrap()
            .with_channel(ChannelTrace::PerEpoch(vec![1.0, 2.0]))
            .unwrap();
        let (s, plan) = schedule_fading(&i, &Shannon).unwrap();
        let text = schedule_to_csv(&i, &s, Some(&Plan::Fading(plan.clone()))).unwrap();
        assert!(text.starts_with("epoch,rate,on_time,phi,energy,gain\n"));
        let (back, p) = schedule_from_csv(&text, &i, &Shannon).unwrap();
        assert_eq!(back.phis(), s.phis());
        assert_eq!(p, Some(Plan::Fading(plan)));
    }

    #[test]
    fn schedule_csv_must_cover_every_epoch() {
        let i = parse_instance(TWO_DEADLINE).unwrap();
        let short = "epoch,rate,on_time,phi,energy\n1,3,1,3,20\n";
        assert!(matches!(schedule_from_csv(short, &i, &Shannon), Err(IoError::Format(_))));
        let skipped = "epoch,rate,on_time,phi,energy\n2,3,1,3,20\n1,1,1,1,2\n";
        assert!(matches!(schedule_from_csv(skipped, &i, &Shannon), Err(IoError::Format(_))));
    }

    #[test]
    fn staircase_vertices() {
        let c = StepCurve {
            points: vec![(0.0, 1.0), (2.0, 3.0)],
        };
        assert_eq!(step_vertices(&c), vec![(0.0, 0.0), (0.0, 1.0), (2.0, 1.0), (2.0, 3.0)]);
        let csv = curve_to_csv(&step_vertices(&c)).unwrap();
        assert_eq!(csv, "t,value\n0,0\n0,1\n2,1\n2,3\n");
    }
}
