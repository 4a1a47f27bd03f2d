//! Scenario configuration: one JSON document fully determines a run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{ArmModel, SafetySpec, Vec3};
use crate::planner::PlannerParams;
use crate::policy::{DisplayPoses, PolicyTable};
use crate::safe_control::{SafetyParams, TrackingGains};
use crate::task_graph::{BlockId, TaskGraph};

use super::human::{Body, HumanModel};
use super::SimError;

/// Scripted disturbance layered on top of the normal task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hazard {
    /// Once the first insertion starts, the left hand moves onto the distal
    /// robot link nearest to the left shoulder, holds, and withdraws.
    LeftHandIncursion { speed: f64, acceleration: f64, hold: f64 },
    /// As soon as the robot starts its first motion, the subject leans in and
    /// brings the right hand to the container before it arrives.
    EarlyReach { lean: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub arm: ArmModel,
    pub safety_spec: SafetySpec,
    pub graph: TaskGraph,
    /// Block positions on the table, block `b` at index `b - 1`.
    pub blocks: Vec<Vec3>,
    pub displays: DisplayPoses,
    /// Insertion point relative to the displayed tool position.
    pub container_offset: Vec3,
    pub initial_joints: Vec<f64>,
    pub body: Body,
    pub human: HumanModel,
    pub seed: u64,
    /// Collaboration mode name: `baseline` or `proactive`.
    pub mode: String,
    /// Safety filter name: `ssa` or `none`.
    pub safety_filter: String,
    pub duration_cap: f64,
    pub dt: f64,
    /// Robot motion time range (s) for each planned move.
    pub motion_time: [f64; 2],
    pub planner: PlannerParams,
    pub safety: SafetyParams,
    pub gains: TrackingGains,
    /// Joint-space distance (rad) at which the robot counts as arrived.
    pub settle_tolerance: f64,
    #[serde(default)]
    pub hazard: Option<Hazard>,
}

/// Wrist roll of each surface's presentation, in surface order.
const DISPLAY_ROLLS: [f64; 4] = [-1.35, -0.45, 0.45, 1.35];
/// Shoulder and elbow pitch that hold the forearm level toward the human.
const DISPLAY_PITCH: (f64, f64) = (1.3, std::f64::consts::FRAC_PI_2 - 1.3);

impl Scenario {
    /// Four clusters of three blocks on the table in front of the subject,
    /// a robot presenting the container by wrist roll, and a retracted
    /// start pose.
    pub fn default_with(human: HumanModel, mode: &str, seed: u64) -> Self {
        let arm = ArmModel::default_six_dof();
        let graph = TaskGraph::default_assembly();
        let body = Body::default();
        let cluster_y = [-0.42, -0.14, 0.14, 0.42];
        let within = [Vec3::new(-0.08, -0.06, 0.0), Vec3::new(0.08, -0.06, 0.0), Vec3::new(0.0, 0.07, 0.0)];
        let mut blocks = Vec::new();
        for y in cluster_y {
            for o in within {
                blocks.push(Vec3::new(body.stance.x - 0.42, y, 0.02) + o);
            }
        }
        let displays = DisplayPoses {
            poses: graph
                .surfaces
                .keys()
                .zip(DISPLAY_ROLLS)
                .map(|(s, roll)| (*s, arm.tool_pose(&display_joints(roll)).expect("six joints")))
                .collect(),
        };
        Self {
            name: format!("{}-{mode}-{seed}", human.name),
            arm,
            safety_spec: SafetySpec::default_human(),
            graph,
            blocks,
            displays,
            container_offset: Vec3::new(0.2, 0.0, 0.0),
            initial_joints: vec![0.0, 0.2, 0.0, 1.0, 0.0, 0.4],
            body,
            human,
            seed,
            mode: mode.to_string(),
            safety_filter: "ssa".to_string(),
            duration_cap: 180.0,
            dt: 1.0 / 30.0,
            motion_time: [2.0, 3.0],
            planner: PlannerParams::default(),
            safety: SafetyParams::default(),
            gains: TrackingGains::default(),
            settle_tolerance: 0.03,
            hazard: None,
        }
    }

    pub fn default_scenario() -> Self {
        Self::default_with(HumanModel::defaults().remove(0), "proactive", 7)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let cfg = |m: String| SimError::Config(m);
        self.arm.validate().map_err(|e| cfg(e.to_string()))?;
        self.arm.check_dimension(&self.initial_joints).map_err(|e| cfg(e.to_string()))?;
        if !self.arm.within_limits(&self.initial_joints) {
            return Err(cfg("initial joints outside limits".into()));
        }
        let blocks = self.graph.block_count();
        if self.blocks.len() != blocks || blocks != crate::intention::BLOCK_COUNT {
            return Err(cfg(format!("expected {} block positions, got {}", crate::intention::BLOCK_COUNT, self.blocks.len())));
        }
        if self.graph.surfaces.len() != 4 {
            return Err(cfg("expected 4 block clusters".into()));
        }
        for s in self.graph.surfaces.keys() {
            if !self.displays.poses.contains_key(s) {
                return Err(cfg(format!("surface {s} has no display pose")));
            }
        }
        self.displays.validate().map_err(|e| cfg(e.to_string()))?;
        PolicyTable::for_graph(&self.graph).validate(&self.graph).map_err(|e| cfg(e.to_string()))?;
        self.human.validate(&self.graph)?;
        self.planner.validate().map_err(|e| cfg(e.to_string()))?;
        self.safety.validate().map_err(cfg)?;
        let positive = [self.duration_cap, self.dt, self.motion_time[0], self.settle_tolerance];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.motion_time[1] < self.motion_time[0] {
            return Err(cfg("durations and tolerances must be positive".into()));
        }
        if (self.safety.dt - self.dt).abs() > 1e-12 {
            return Err(cfg("safety dt must equal the tick".into()));
        }
        Ok(())
    }

    pub fn block_position(&self, block: BlockId) -> Vec3 {
        self.blocks[block as usize - 1]
    }

    /// Where the subject's wrist goes to insert into `surface`.
    pub fn insertion_point(&self, surface: u8) -> Vec3 {
        self.displays.poses[&surface].position + self.container_offset
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let mut s: Scenario = serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        s.graph.index().map_err(|e| SimError::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// Presentation configuration for a given wrist roll.
pub fn display_joints(roll: f64) -> Vec<f64> {
    vec![0.0, DISPLAY_PITCH.0, 0.0, DISPLAY_PITCH.1, roll, 0.0]
}
