//! Wire schema of the live stream and the simulation session behind it.
//!
//! Every message is a JSON object with a schema version `v` and a `type`
//! tag. See `docs/stream.md` for examples.

use anyhow::{bail, Context as _};
use coassembly::geometry::Vec3;
use coassembly::intention::{IntentionLabel, Mlp};
use coassembly::policy::GoalKind;
use coassembly::sim::{HumanModel, Scenario, SimError, Simulation, WorldState};
use coassembly::task_graph::BlockId;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub v: u32,
    #[serde(flatten)]
    pub message: StreamMessage,
}

impl Envelope {
    pub fn new(message: StreamMessage) -> Self {
        Self { v: SCHEMA_VERSION, message }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("stream messages always serialize")
    }

    /// Parse a message, rejecting other schema versions.
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text).context("message is not JSON")?;
        match raw.get("v").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => bail!("schema version {v} is not supported (expected {SCHEMA_VERSION})"),
            None => bail!("message has no schema version `v`"),
        }
        serde_json::from_value(raw).context("malformed stream message")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StreamMessage {
    Snapshot(Snapshot),
    Control(Control),
    Error { message: String },
}

/// Client requests, applied at the next tick boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Control {
    /// Drive the right wrist toward `target`; `null` hands it back to the script.
    WristTarget { target: Option<Vec3> },
    /// Restart in another collaboration mode.
    SetMode { mode: String },
    /// Restart with the safety filter on or off.
    SetSafety { enabled: bool },
    /// Restart with another subject model.
    SelectHuman { name: String },
    Reset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapsuleView {
    pub label: String,
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub node: usize,
    pub completed: Vec<BlockId>,
    pub active_surface: Option<u8>,
    pub level: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub safety_enabled: bool,
    pub safety_triggered: bool,
    pub emergency: bool,
    pub alert: bool,
    pub wrist_override: bool,
    pub done: bool,
}

/// World state after a tick. Geometry is sent as capsule endpoints so the
/// client needs no kinematics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Incremented on every restart; ticks are monotone within a session.
    pub session: u64,
    pub tick: u64,
    pub time: f64,
    pub mode: String,
    pub human_model: String,
    pub joints: Vec<f64>,
    pub robot: Vec<CapsuleView>,
    pub human: Vec<CapsuleView>,
    pub obstacles: Vec<CapsuleView>,
    pub blocks: Vec<Vec3>,
    pub wrist: Vec3,
    /// Minimum robot-environment distance and safety index of the last
    /// control step; absent before the first tick.
    pub distance: Option<f64>,
    pub phi: Option<f64>,
    pub intention: IntentionLabel,
    pub confidence: f64,
    pub task: TaskView,
    pub goal: Option<GoalKind>,
    pub flags: Flags,
}

/// One simulation timeline driven tick by tick.
pub struct Session {
    model: Option<Mlp>,
    humans: Vec<HumanModel>,
    sim: Simulation,
    world: WorldState,
    session: u64,
    finished: bool,
}

impl Session {
    pub fn new(base: Scenario, model: Option<Mlp>, humans: Vec<HumanModel>) -> anyhow::Result<Self> {
        let sim = Simulation::new(base, model.clone())?;
        let world = sim.initial_world();
        Ok(Self { model, humans, sim, world, session: 0, finished: false })
    }

    pub fn scenario(&self) -> &Scenario {
        self.sim.scenario()
    }

    fn restart(&mut self, scenario: Scenario) -> anyhow::Result<()> {
        let sim = Simulation::new(scenario, self.model.clone())?;
        self.world = sim.initial_world();
        self.sim = sim;
        self.session += 1;
        self.finished = false;
        Ok(())
    }

    pub fn apply(&mut self, control: Control) -> anyhow::Result<()> {
        let mut next = self.sim.scenario().clone();
        match control {
            Control::WristTarget { target } => {
                self.sim.set_wrist_override(&mut self.world, target);
                return Ok(());
            }
            Control::Reset => {}
            Control::SetMode { mode } => next.mode = mode,
            Control::SetSafety { enabled } => next.safety_filter = if enabled { "ssa" } else { "none" }.into(),
            Control::SelectHuman { name } => {
                let Some(h) = self.humans.iter().find(|h| h.name == name) else {
                    bail!("unknown human model `{name}`")
                };
                next.human = h.clone();
            }
        }
        self.restart(next)
    }

    /// Advance one tick unless the run has ended.
    pub fn tick(&mut self) -> anyhow::Result<()> {
        if self.finished {
            return Ok(());
        }
        match self.sim.step(&mut self.world) {
            Ok(()) => {
                self.finished = self.world.done();
                Ok(())
            }
            Err(SimError::Timeout(_)) => {
                self.finished = true;
                Ok(())
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        let s = self.sim.scenario();
        let w = &self.world;
        let view = |caps: &[coassembly::geometry::LabeledCapsule]| -> Vec<CapsuleView> {
            caps.iter()
                .map(|c| CapsuleView { label: c.label.clone(), a: c.capsule.a, b: c.capsule.b, radius: c.capsule.radius })
                .collect()
        };
        let robot = s
            .arm
            .forward_kinematics(&w.robot.q)
            .map(|caps| {
                caps.into_iter()
                    .enumerate()
                    .map(|(i, c)| CapsuleView { label: format!("link{i}"), a: c.a, b: c.b, radius: c.radius })
                    .collect()
            })
            .unwrap_or_default();
        let node = &s.graph.nodes[w.task];
        let control = w.last_control.as_ref();
        Snapshot {
            session: self.session,
            tick: w.tick,
            time: w.clock,
            mode: self.sim.mode_name().to_string(),
            human_model: s.human.name.clone(),
            joints: w.robot.q.clone(),
            robot,
            human: view(&w.env.human),
            obstacles: view(&w.env.obstacles),
            blocks: w.env.blocks.clone(),
            wrist: w.human.right_wrist,
            distance: control.map(|c| c.distance),
            phi: control.map(|c| c.phi),
            intention: w.prediction,
            confidence: w.confidence,
            task: TaskView {
                node: node.id,
                completed: node.completed.iter().copied().collect(),
                active_surface: node.active_surface,
                level: node.level,
            },
            goal: w.goal,
            flags: Flags {
                safety_enabled: s.safety_filter != "none",
                safety_triggered: control.is_some_and(|c| c.safety_triggered),
                emergency: control.is_some_and(|c| c.emergency),
                alert: w.alert,
                wrist_override: w.wrist_override.is_some(),
                done: self.finished,
            },
        }
    }
}
