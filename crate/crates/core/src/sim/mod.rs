//! Discrete-time co-assembly world: scripted subjects, baseline and
//! proactive execution, demonstrations, disturbance runs and metrics.

pub mod human;
pub mod metrics;
pub mod scenario;
pub mod world;

use serde::{Deserialize, Serialize};

use crate::geometry::GeometryError;
use std::collections::VecDeque;

use crate::geometry::Vec3;
use crate::intention::{featurize_track, IntentionError, IntentionLabel, LabeledDataset, Mlp, Provenance, WINDOW};
use crate::policy::PolicyError;
use crate::task_graph::TaskGraphError;

pub use human::{Body, BodyPose, HumanModel, Phase, Posture, Segment};
pub use metrics::{Event, EventKind, MetricsLog, Stats, TelemetryRecord, TimeTable, Totals};
pub use scenario::{display_joints, Hazard, Scenario};
pub use world::{collaboration_modes, run_scenario, Baseline, CollaborationMode, Context, HumanState, Proactive, Simulation, WorldState};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("duration cap reached after {} insertions", .0.totals.block_times.len())]
    Timeout(Box<MetricsLog>),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Intention(#[from] IntentionError),
    #[error(transparent)]
    Task(#[from] TaskGraphError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

impl Scenario {
    /// Copy of this scenario for another subject, mode and seed.
    pub fn variant(&self, human: &HumanModel, mode: &str, seed: u64) -> Scenario {
        Scenario {
            name: format!("{}-{mode}-{seed}", human.name),
            human: human.clone(),
            mode: mode.to_string(),
            seed,
            ..self.clone()
        }
    }
}

/// Nominal wrist speed below which a window is labeled idle (m/s).
pub const IDLE_SPEED: f64 = 0.05;

/// Scripted demonstrations labeled with the reach in progress.
///
/// Each trial runs a full manual-protocol episode and records the window
/// features of every tick.
pub fn generate_demos(base: &Scenario, humans: &[HumanModel], trials: usize, seed: u64) -> Result<LabeledDataset, SimError> {
    let mut data = LabeledDataset::default();
    for (m, h) in humans.iter().enumerate() {
        for k in 0..trials {
            let trial_seed = seed.wrapping_mul(1_000_003).wrapping_add((m * 1000 + k) as u64);
            let sim = Simulation::new(base.variant(h, "baseline", trial_seed), None)?;
            let mut world = sim.initial_world();
            let mut nominal: VecDeque<Vec3> = VecDeque::with_capacity(WINDOW);
            while !world.done() {
                sim.step(&mut world)?;
                if nominal.len() == WINDOW {
                    nominal.pop_front();
                }
                nominal.push_back(world.human.right_wrist);
                let span = (nominal.len().max(2) - 1) as f64 * sim.scenario().dt;
                let speed = (nominal[nominal.len() - 1] - nominal[0]).norm() / span;
                // A new intention is labeled once the hand visibly moves.
                let label = match world.human.phase {
                    Phase::Reach { .. } if speed < IDLE_SPEED => IntentionLabel::Idle,
                    Phase::Carry { block, .. } if speed < IDLE_SPEED => IntentionLabel::Reach(block),
                    ref phase => phase.reaching().map_or(IntentionLabel::Idle, IntentionLabel::Reach),
                };
                data.push(featurize_track(&world.wrist_track_snapshot(), &base.blocks), label, Provenance::Original);
            }
        }
    }
    Ok(data)
}

/// The scripted disturbances exercised by [`disturbance_suite`].
pub const HAZARDS: [&str; 3] = ["left_hand_incursion", "early_reach", "proactive_posture"];

/// Peak speed (m/s) and acceleration (m/s^2) of the scripted left-hand incursion.
pub const INCURSION_SPEED: f64 = 0.3;
pub const INCURSION_ACCELERATION: f64 = 1.0;

/// Simulated span of each disturbance run (s).
pub const HAZARD_SPAN: f64 = 20.0;

/// Scenario for a named disturbance.
pub fn hazard_scenario(base: &Scenario, hazard: &str, posture: Posture) -> Result<Scenario, SimError> {
    let mut s = base.clone();
    s.human.posture = posture;
    match hazard {
        "left_hand_incursion" => s.hazard = Some(Hazard::LeftHandIncursion { speed: INCURSION_SPEED, acceleration: INCURSION_ACCELERATION, hold: 1.0 }),
        "early_reach" => s.hazard = Some(Hazard::EarlyReach { lean: 0.3 }),
        "proactive_posture" => {
            s.hazard = None;
            s.human.posture = Posture::Proactive;
        }
        other => return Err(SimError::Config(format!("unknown hazard `{other}`"))),
    }
    s.name = format!("{}-{hazard}", base.name);
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRun {
    pub hazard: String,
    pub posture: Posture,
    pub safety: bool,
    pub log: MetricsLog,
}

/// The scripted hazards plus a conservative-posture reference, each with the
/// safety filter on and off.
pub fn disturbance_suite(base: &Scenario, model: Option<&Mlp>) -> Result<Vec<SuiteRun>, SimError> {
    let mut cases: Vec<(&str, Posture)> = HAZARDS.iter().map(|h| (*h, base.human.posture)).collect();
    cases.push(("conservative_posture", Posture::Conservative));
    let mut out = Vec::new();
    for (name, posture) in cases {
        let mut s = if name == "conservative_posture" {
            let mut s = base.clone();
            s.hazard = None;
            s.human.posture = Posture::Conservative;
            s.name = format!("{}-{name}", base.name);
            s
        } else {
            hazard_scenario(base, name, posture)?
        };
        for safety in [true, false] {
            s.safety_filter = if safety { "ssa" } else { "none" }.to_string();
            let log = Simulation::new(s.clone(), model.cloned())?.run_for(HAZARD_SPAN)?;
            out.push(SuiteRun { hazard: name.to_string(), posture: s.human.posture, safety, log });
        }
    }
    Ok(out)
}

/// Baseline versus proactive statistics over subjects and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub runs: usize,
    pub baseline: TimeTable,
    pub proactive: TimeTable,
    /// Relative reduction of the mean (task, surface, block).
    pub reduction: [f64; 3],
    pub recognition_lead: Option<Stats>,
    pub proactive_min_distance: f64,
    pub baseline_min_distance: f64,
}

/// Run every subject under every seed in both modes.
pub fn compare(base: &Scenario, humans: &[HumanModel], seeds: &[u64], model: &Mlp) -> Result<(Comparison, Vec<MetricsLog>), SimError> {
    let mut logs = Vec::new();
    for mode in ["baseline", "proactive"] {
        for &seed in seeds {
            for h in humans {
                logs.push(run_scenario(&base.variant(h, mode, seed), Some(model))?);
            }
        }
    }
    let pick = |mode: &str| -> Vec<&Totals> { logs.iter().filter(|l| l.mode == mode).map(|l| &l.totals).collect() };
    let none = || SimError::Config("no completed runs".into());
    let baseline = TimeTable::of(&pick("baseline")).ok_or_else(none)?;
    let proactive = TimeTable::of(&pick("proactive")).ok_or_else(none)?;
    let cut = |b: &Stats, p: &Stats| (b.avg - p.avg) / b.avg;
    let leads: Vec<f64> = pick("proactive").iter().flat_map(|t| t.recognition_leads.iter().copied()).collect();
    let min_d = |mode: &str| pick(mode).iter().map(|t| t.min_distance).fold(f64::INFINITY, f64::min);
    let cmp = Comparison {
        runs: seeds.len() * humans.len(),
        reduction: [
            cut(&baseline.task, &proactive.task),
            cut(&baseline.surface, &proactive.surface),
            cut(&baseline.block, &proactive.block),
        ],
        baseline,
        proactive,
        recognition_lead: Stats::of(&leads),
        proactive_min_distance: min_d("proactive"),
        baseline_min_distance: min_d("baseline"),
    };
    Ok((cmp, logs))
}

/// Every scripted hazard for every subject and seed, with the safety filter
/// on and off.
pub fn safety_matrix(base: &Scenario, humans: &[HumanModel], seeds: &[u64], model: Option<&Mlp>) -> Result<Vec<SuiteRun>, SimError> {
    let mut out = Vec::new();
    for hazard in HAZARDS {
        for h in humans {
            for &seed in seeds {
                let mut s = hazard_scenario(&base.variant(h, &base.mode, seed), hazard, h.posture)?;
                for safety in [true, false] {
                    s.safety_filter = if safety { "ssa" } else { "none" }.to_string();
                    let log = Simulation::new(s.clone(), model.cloned())?.run_for(HAZARD_SPAN)?;
                    out.push(SuiteRun { hazard: hazard.to_string(), posture: s.human.posture, safety, log });
                }
            }
        }
    }
    Ok(out)
}
