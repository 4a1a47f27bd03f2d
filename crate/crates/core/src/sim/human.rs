//! Scripted human: preference-ordered pick-and-insert cycles with
//! trapezoidal wrist motion, and a capsule body built around the wrists.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{Capsule, LabeledCapsule, Vec3};
use crate::task_graph::{BlockId, TaskGraph};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Posture {
    Conservative,
    Proactive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanModel {
    pub name: String,
    pub surface_order: Vec<u8>,
    /// Insertion order within each surface.
    pub block_order: BTreeMap<u8, Vec<BlockId>>,
    /// Peak wrist speed (m/s).
    pub reach_speed: f64,
    pub reach_acceleration: f64,
    pub grab_duration: f64,
    pub insertion_duration: f64,
    /// RMS wrist position noise (m), temporally correlated.
    pub position_noise: f64,
    pub posture: Posture,
    /// Torso lean toward the robot (m) during insertions with the proactive posture.
    pub lean: f64,
    /// Delay between a spoken command and the robot acting on it (s).
    pub command_latency: f64,
}

impl HumanModel {
    pub fn new(name: &str, surface_order: [u8; 4], block_order: [[BlockId; 3]; 4]) -> Self {
        let block_order = surface_order.iter().zip(block_order).map(|(s, b)| (*s, b.to_vec())).collect();
        Self {
            name: name.to_string(),
            surface_order: surface_order.to_vec(),
            block_order,
            reach_speed: 0.8,
            reach_acceleration: 8.0,
            grab_duration: 0.4,
            insertion_duration: 2.0,
            position_noise: 0.02,
            posture: Posture::Conservative,
            lean: 0.15,
            command_latency: 1.0,
        }
    }

    /// Five subjects with distinct preferences, speeds and postures.
    pub fn defaults() -> Vec<HumanModel> {
        let mut a = Self::new("subject-a", [1, 2, 3, 4], [[1, 2, 3], [4, 5, 6], [7, 8, 9], [10, 11, 12]]);
        a.reach_speed = 0.8;
        let mut b = Self::new("subject-b", [4, 3, 2, 1], [[12, 11, 10], [9, 7, 8], [6, 4, 5], [3, 1, 2]]);
        b.reach_speed = 0.9;
        b.grab_duration = 0.35;
        b.posture = Posture::Proactive;
        let mut c = Self::new("subject-c", [2, 4, 1, 3], [[5, 4, 6], [10, 12, 11], [2, 3, 1], [8, 9, 7]]);
        c.reach_speed = 0.7;
        c.grab_duration = 0.45;
        let mut d = Self::new("subject-d", [3, 1, 4, 2], [[8, 7, 9], [1, 3, 2], [11, 10, 12], [6, 5, 4]]);
        d.reach_speed = 0.85;
        d.insertion_duration = 2.2;
        d.posture = Posture::Proactive;
        d.lean = 0.12;
        let mut e = Self::new("subject-e", [1, 3, 4, 2], [[3, 2, 1], [9, 8, 7], [12, 10, 11], [4, 6, 5]]);
        e.reach_speed = 0.75;
        e.insertion_duration = 1.8;
        vec![a, b, c, d, e]
    }

    pub fn validate(&self, graph: &TaskGraph) -> Result<(), SimError> {
        let positive = [
            self.reach_speed,
            self.reach_acceleration,
            self.grab_duration,
            self.insertion_duration,
            self.command_latency,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(SimError::Config(format!("human `{}`: speeds and durations must be positive", self.name)));
        }
        if !(self.position_noise >= 0.0 && self.lean >= 0.0) {
            return Err(SimError::Config(format!("human `{}`: noise and lean must be nonnegative", self.name)));
        }
        let mut surfaces = self.surface_order.clone();
        surfaces.sort_unstable();
        if surfaces != graph.surfaces.keys().copied().collect::<Vec<_>>() {
            return Err(SimError::Config(format!("human `{}`: surface order is not a permutation", self.name)));
        }
        for (s, blocks) in &graph.surfaces {
            let mut mine = self.block_order.get(s).cloned().unwrap_or_default();
            mine.sort_unstable();
            let mut want = blocks.clone();
            want.sort_unstable();
            if mine != want {
                return Err(SimError::Config(format!("human `{}`: block order of surface {s} is not a permutation", self.name)));
            }
        }
        Ok(())
    }

    /// Blocks in the order this subject inserts them.
    pub fn sequence(&self) -> Vec<BlockId> {
        self.surface_order.iter().flat_map(|s| self.block_order[s].iter().copied()).collect()
    }
}

/// Straight-line move with a trapezoidal (or triangular) speed profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub from: Vec3,
    pub to: Vec3,
    pub start: f64,
    pub duration: f64,
    speed: f64,
    accel: f64,
}

impl Segment {
    pub fn new(from: Vec3, to: Vec3, start: f64, speed: f64, accel: f64) -> Self {
        let d = (to - from).norm();
        let duration = if d * accel <= speed * speed {
            2.0 * (d / accel).sqrt()
        } else {
            d / speed + speed / accel
        };
        let speed = speed.min((d * accel).sqrt());
        Self { from, to, start, duration, speed, accel }
    }

    /// Distance travelled after `t` seconds of motion.
    fn travelled(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.duration);
        let ramp = self.speed / self.accel;
        let total = (self.to - self.from).norm();
        if t < ramp {
            0.5 * self.accel * t * t
        } else if t > self.duration - ramp {
            let r = self.duration - t;
            total - 0.5 * self.accel * r * r
        } else {
            0.5 * self.accel * ramp * ramp + self.speed * (t - ramp)
        }
    }

    pub fn position(&self, time: f64) -> Vec3 {
        let total = (self.to - self.from).norm();
        if total == 0.0 {
            return self.to;
        }
        self.from + (self.to - self.from) * (self.travelled(time - self.start) / total)
    }

    pub fn done(&self, time: f64) -> bool {
        time >= self.start + self.duration
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Phase {
    /// Waiting for the robot to present `surface` before reaching (command mode).
    AwaitRobot { block: BlockId },
    Reach { block: BlockId, path: Segment },
    Grab { block: BlockId, until: f64 },
    Carry { block: BlockId, path: Segment },
    /// Holding the block at the container until the right surface is shown.
    AwaitDisplay { block: BlockId, since: f64 },
    Insert { block: BlockId, until: f64 },
    Done,
}

impl Phase {
    pub fn block(&self) -> Option<BlockId> {
        match self {
            Phase::AwaitRobot { block }
            | Phase::Reach { block, .. }
            | Phase::Grab { block, .. }
            | Phase::Carry { block, .. }
            | Phase::AwaitDisplay { block, .. }
            | Phase::Insert { block, .. } => Some(*block),
            Phase::Done => None,
        }
    }

    /// Ground-truth intention: the reach target until the grab completes.
    pub fn reaching(&self) -> Option<BlockId> {
        match self {
            Phase::Reach { block, .. } | Phase::Grab { block, .. } => Some(*block),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Phase::AwaitRobot { .. } => "await_robot",
            Phase::Reach { .. } => "reach",
            Phase::Grab { .. } => "grab",
            Phase::Carry { .. } => "carry",
            Phase::AwaitDisplay { .. } => "await_display",
            Phase::Insert { .. } => "insert",
            Phase::Done => "done",
        }
    }
}

/// Fixed body dimensions (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Body {
    /// Torso base on the floor side of the table, facing -x.
    pub stance: Vec3,
    pub torso_height: f64,
    pub torso_radius: f64,
    pub head_radius: f64,
    pub shoulder_half_width: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    pub limb_radius: f64,
    pub hand_length: f64,
}

impl Default for Body {
    fn default() -> Self {
        Self {
            stance: Vec3::new(1.6, 0.0, -0.1),
            torso_height: 0.45,
            torso_radius: 0.15,
            head_radius: 0.10,
            shoulder_half_width: 0.19,
            upper_arm: 0.30,
            forearm: 0.30,
            limb_radius: 0.045,
            hand_length: 0.08,
        }
    }
}

/// Human pose inputs for one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyPose {
    pub right_wrist: Vec3,
    pub left_wrist: Vec3,
    /// Forward lean of the upper torso toward -x.
    pub lean: f64,
}

fn elbow(shoulder: Vec3, wrist: Vec3, upper: f64, fore: f64, outward: f64) -> Vec3 {
    let d = wrist - shoulder;
    let len = d.norm();
    if len < 1e-9 {
        return shoulder + Vec3::new(0.0, 0.0, -upper);
    }
    let dir = d / len;
    if len >= upper + fore {
        return shoulder + dir * (len * upper / (upper + fore));
    }
    // Law of cosines; the elbow hangs down and slightly outward.
    let a = (upper * upper - fore * fore + len * len) / (2.0 * len);
    let h = (upper * upper - a * a).max(0.0).sqrt();
    let bias = Vec3::new(0.0, 0.5 * outward, -1.0);
    let mut n = bias - dir * bias.dot(&dir);
    if n.norm() < 1e-9 {
        n = Vec3::new(1.0, 0.0, 0.0) - dir * dir.x;
    }
    shoulder + dir * a + n.normalize() * h
}

impl Body {
    fn torso_top(&self, lean: f64) -> Vec3 {
        self.stance + Vec3::new(-lean, 0.0, self.torso_height)
    }

    /// Right is +y for a body facing -x.
    pub fn shoulder(&self, lean: f64, right: bool) -> Vec3 {
        let side = if right { 1.0 } else { -1.0 };
        self.torso_top(lean) + Vec3::new(0.0, side * self.shoulder_half_width, 0.0)
    }

    pub fn rest_wrist(&self, right: bool) -> Vec3 {
        let side = if right { 1.0 } else { -1.0 };
        self.stance + Vec3::new(-0.25, side * 0.25, 0.15)
    }

    /// Ten labeled capsules; the right forearm and hand follow `noisy_right`.
    pub fn capsules(&self, pose: &BodyPose, noisy_right: Vec3) -> Vec<LabeledCapsule> {
        let top = self.torso_top(pose.lean);
        let head_base = top + Vec3::new(-0.15 * pose.lean, 0.0, 0.12);
        let mut out = vec![
            LabeledCapsule::new("head", Capsule::new(head_base, head_base + Vec3::new(0.0, 0.0, 0.08), self.head_radius)),
            LabeledCapsule::new("torso", Capsule::new(self.stance, top, self.torso_radius)),
        ];
        for (right, wrist) in [(false, pose.left_wrist), (true, noisy_right)] {
            let side = if right { "right" } else { "left" };
            let s = self.shoulder(pose.lean, right);
            let outward = if right { 1.0 } else { -1.0 };
            // The upper arm follows the noise-free wrist so that jitter stays on the allowed parts.
            let anchor = if right { pose.right_wrist } else { wrist };
            let e = elbow(s, anchor, self.upper_arm, self.forearm, outward);
            let reach_dir = (wrist - s).try_normalize(1e-9).unwrap_or(Vec3::new(-1.0, 0.0, 0.0));
            out.push(LabeledCapsule::new(format!("{side}_upper_arm"), Capsule::new(s, e, self.limb_radius)));
            out.push(LabeledCapsule::new(format!("{side}_forearm"), Capsule::new(e, wrist, self.limb_radius)));
            out.push(LabeledCapsule::new(
                format!("{side}_hand"),
                Capsule::new(wrist, wrist + reach_dir * self.hand_length, 0.04),
            ));
        }
        for (side, y) in [("left", -0.1), ("right", 0.1)] {
            let hip = self.stance + Vec3::new(0.0, y, 0.0);
            out.push(LabeledCapsule::new(
                format!("{side}_thigh"),
                Capsule::new(hip, hip + Vec3::new(-0.1, 0.0, -0.4), 0.07),
            ));
        }
        out
    }
}
