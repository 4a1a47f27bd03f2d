//! Per-tick telemetry, the event stream, and the totals derived from it.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::intention::IntentionLabel;
use crate::safe_control::ControlOutput;
use crate::task_graph::{BlockId, TaskGraph};

use super::SimError;

#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRecord {
    pub time: f64,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub u: Vec<f64>,
    pub u_safe: Vec<f64>,
    pub distance: f64,
    pub distance_rate: f64,
    pub phi: f64,
    pub safety_triggered: bool,
    pub emergency: bool,
}

impl TelemetryRecord {
    pub fn new(time: f64, q: &[f64], qdot: &[f64], out: &ControlOutput) -> Self {
        Self {
            time,
            q: q.to_vec(),
            qdot: qdot.to_vec(),
            u: out.u_nominal.clone(),
            u_safe: out.u_safe.clone(),
            distance: out.distance,
            distance_rate: out.distance_rate,
            phi: out.phi,
            safety_triggered: out.safety_triggered,
            emergency: out.emergency,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Explicit spoken command to present a surface.
    Command,
    /// Smoothed predicted intention changed.
    Intention,
    /// Robot committed to a new goal and trajectory.
    Goal,
    PlanFailed,
    Alert,
    ReachStart,
    /// Grab completed.
    Grab,
    Insertion,
    Hazard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub block: Option<BlockId>,
    pub surface: Option<u8>,
    pub detail: String,
}

/// Table-style totals for one run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub completed: bool,
    pub task_time: Option<f64>,
    /// Per surface, from the end of the previous surface to its last insertion.
    pub surface_times: Vec<f64>,
    /// Every block, from the previous insertion to its own, in insertion order.
    pub block_times: Vec<f64>,
    /// Block times of the first block of each surface, which include the
    /// wait for the robot to present the surface.
    pub opening_block_times: Vec<f64>,
    pub min_distance: f64,
    pub safety_triggers: usize,
    pub emergency_ticks: usize,
    /// Grab time minus the time the reached block was first predicted.
    pub recognition_leads: Vec<f64>,
}

impl Totals {
    pub fn compute(events: &[Event], telemetry: &[TelemetryRecord], graph: &TaskGraph) -> Self {
        let mut t = Totals { min_distance: f64::INFINITY, ..Default::default() };
        let mut per_surface: BTreeMap<u8, usize> = BTreeMap::new();
        let mut last_insert = 0.0;
        let mut last_surface_end = 0.0;
        let mut inserted = 0;
        for e in events.iter().filter(|e| e.kind == EventKind::Insertion) {
            let (Some(_), Some(surface)) = (e.block, e.surface) else { continue };
            let count = per_surface.entry(surface).or_insert(0);
            *count += 1;
            let dt = e.time - last_insert;
            t.block_times.push(dt);
            if *count == 1 {
                t.opening_block_times.push(dt);
            }
            if *count == graph.surfaces.get(&surface).map_or(0, Vec::len) {
                t.surface_times.push(e.time - last_surface_end);
                last_surface_end = e.time;
            }
            last_insert = e.time;
            inserted += 1;
        }
        t.completed = inserted == graph.block_count();
        t.task_time = t.completed.then_some(last_insert);
        for r in telemetry {
            t.min_distance = t.min_distance.min(r.distance);
            t.safety_triggers += r.safety_triggered as usize;
            t.emergency_ticks += r.emergency as usize;
        }
        t.recognition_leads = recognition_leads(events);
        t
    }
}

/// For each grab, how long before it the smoothed prediction settled on the
/// grabbed block, counted from the start of that reach. Zero if it never did.
pub fn recognition_leads(events: &[Event]) -> Vec<f64> {
    if !events.iter().any(|e| e.kind == EventKind::Intention) {
        return Vec::new();
    }
    let mut leads = Vec::new();
    let mut current = (IntentionLabel::Idle, 0.0);
    let mut reach_start = 0.0;
    for e in events {
        match e.kind {
            EventKind::Intention => {
                if let Ok(l) = e.detail.parse::<IntentionLabel>() {
                    current = (l, e.time);
                }
            }
            EventKind::ReachStart => reach_start = e.time,
            EventKind::Grab => {
                let hit = e.block.is_some_and(|b| current.0 == IntentionLabel::Reach(b));
                leads.push(if hit { e.time - current.1.max(reach_start) } else { 0.0 });
            }
            _ => {}
        }
    }
    leads
}

#[derive(Clone, PartialEq)]
pub struct MetricsLog {
    pub scenario: String,
    pub mode: String,
    pub seed: u64,
    pub telemetry: Vec<TelemetryRecord>,
    pub events: Vec<Event>,
    pub totals: Totals,
    pub timed_out: bool,
    /// Number of classifier evaluations during the run.
    pub predictions: usize,
    pub planner_calls: usize,
}

impl std::fmt::Debug for MetricsLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetricsLog")
            .field("scenario", &self.scenario)
            .field("mode", &self.mode)
            .field("seed", &self.seed)
            .field("ticks", &self.telemetry.len())
            .field("events", &self.events.len())
            .field("totals", &self.totals)
            .field("timed_out", &self.timed_out)
            .finish()
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

impl MetricsLog {
    /// Longest run of consecutive ticks with a positive safety index.
    pub fn longest_unsafe_streak(&self) -> usize {
        let (mut best, mut cur) = (0, 0);
        for r in &self.telemetry {
            cur = if r.phi > 0.0 { cur + 1 } else { 0 };
            best = best.max(cur);
        }
        best
    }

    /// Smallest avoid-distance over the telemetry.
    pub fn min_distance(&self) -> f64 {
        self.telemetry.iter().map(|r| r.distance).fold(f64::INFINITY, f64::min)
    }

    pub fn telemetry_csv(&self) -> Result<Vec<u8>, SimError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let n = self.telemetry.first().map_or(0, |r| r.q.len());
        let mut header = vec!["time".to_string()];
        for prefix in ["q", "qd", "u", "us"] {
            header.extend((0..n).map(|i| format!("{prefix}{i}")));
        }
        header.extend(["D", "Ddot", "phi", "safety_triggered", "emergency"].map(String::from));
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.telemetry {
            let mut row = vec![num(r.time)];
            for v in [&r.q, &r.qdot, &r.u, &r.u_safe] {
                row.extend(v.iter().map(|x| num(*x)));
            }
            row.extend([num(r.distance), num(r.distance_rate), num(r.phi)]);
            row.push(r.safety_triggered.to_string());
            row.push(r.emergency.to_string());
            w.write_record(&row).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| SimError::Io(e.to_string()))
    }

    pub fn events_csv(&self) -> Result<Vec<u8>, SimError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.events {
            w.serialize(e).map_err(csv_err)?;
        }
        if self.events.is_empty() {
            w.write_record(["time", "kind", "block", "surface", "detail"]).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| SimError::Io(e.to_string()))
    }

    /// Writes `<stem>_telemetry.csv` and `<stem>_events.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(), SimError> {
        std::fs::create_dir_all(dir).map_err(io_err)?;
        write_file(&dir.join(format!("{stem}_telemetry.csv")), &self.telemetry_csv()?)?;
        write_file(&dir.join(format!("{stem}_events.csv")), &self.events_csv()?)
    }
}

fn csv_err(e: csv::Error) -> SimError {
    SimError::Io(e.to_string())
}

fn io_err(e: std::io::Error) -> SimError {
    SimError::Io(e.to_string())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), SimError> {
    let mut f = std::fs::File::create(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    f.write_all(bytes).map_err(io_err)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub avg: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    /// Sample statistics; `None` for an empty slice.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let avg = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - avg) * (v - avg)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some(Self {
            avg,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// Complete task / single surface / single block statistics over runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeTable {
    pub task: Stats,
    pub surface: Stats,
    pub block: Stats,
}

impl TimeTable {
    pub fn of(runs: &[&Totals]) -> Option<Self> {
        let task: Vec<f64> = runs.iter().filter_map(|t| t.task_time).collect();
        let surface: Vec<f64> = runs.iter().flat_map(|t| t.surface_times.iter().copied()).collect();
        let block: Vec<f64> = runs.iter().flat_map(|t| t.opening_block_times.iter().copied()).collect();
        Some(Self { task: Stats::of(&task)?, surface: Stats::of(&surface)?, block: Stats::of(&block)? })
    }
}
