use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ArmModel, Capsule, GeometryError, Vec3};

/// Distance reported when the scene has no capsule flagged `Avoid`.
pub const NO_AVOID_SENTINEL: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCapsule {
    pub label: String,
    pub capsule: Capsule,
    /// Endpoint velocities (m/s) of `a` and `b`.
    #[serde(default)]
    pub velocity: [Vec3; 2],
}

impl LabeledCapsule {
    pub fn new(label: impl Into<String>, capsule: Capsule) -> Self {
        Self { label: label.into(), capsule, velocity: [Vec3::zeros(); 2] }
    }

    pub fn point_velocity(&self, t: f64) -> Vec3 {
        self.velocity[0] * (1.0 - t) + self.velocity[1] * t
    }

    /// Capsule advanced by `dt` along its endpoint velocities.
    pub fn advanced(&self, dt: f64) -> Capsule {
        Capsule {
            a: self.capsule.a + self.velocity[0] * dt,
            b: self.capsule.b + self.velocity[1] * dt,
            radius: self.capsule.radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Contact {
    Avoid,
    Allow,
}

/// Per-capsule contact flags keyed by environment capsule label.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SafetySpec {
    pub flags: BTreeMap<String, Contact>,
}

impl SafetySpec {
    pub fn new<I, S>(flags: I) -> Self
    where
        I: IntoIterator<Item = (S, Contact)>,
        S: Into<String>,
    {
        Self { flags: flags.into_iter().map(|(k, v)| (k.into(), v)).collect() }
    }

    /// Avoid everything except the right forearm and right hand.
    pub fn default_human() -> Self {
        Self::new(HUMAN_LABELS.iter().map(|l| {
            let c = if *l == "right_forearm" || *l == "right_hand" { Contact::Allow } else { Contact::Avoid };
            (*l, c)
        }))
    }

    pub fn is_avoid(&self, label: &str) -> bool {
        matches!(self.flags.get(label), Some(Contact::Avoid))
    }

    pub fn validate(&self, env: &EnvironmentState) -> Result<(), GeometryError> {
        for c in env.capsules() {
            if !self.flags.contains_key(&c.label) {
                return Err(GeometryError::UnflaggedCapsule(c.label.clone()));
            }
        }
        Ok(())
    }
}

pub const HUMAN_LABELS: [&str; 10] = [
    "head",
    "torso",
    "left_upper_arm",
    "left_forearm",
    "right_upper_arm",
    "right_forearm",
    "left_hand",
    "right_hand",
    "left_thigh",
    "right_thigh",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentState {
    pub human: Vec<LabeledCapsule>,
    pub obstacles: Vec<LabeledCapsule>,
    pub blocks: Vec<Vec3>,
    pub timestamp: f64,
}

impl EnvironmentState {
    pub fn capsules(&self) -> impl Iterator<Item = &LabeledCapsule> {
        self.human.iter().chain(self.obstacles.iter())
    }

    pub fn capsule(&self, index: usize) -> Option<&LabeledCapsule> {
        self.capsules().nth(index)
    }

    pub fn human_part(&self, label: &str) -> Option<&LabeledCapsule> {
        self.human.iter().find(|c| c.label == label)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let mut seen = std::collections::BTreeSet::new();
        for c in self.capsules() {
            if !seen.insert(c.label.as_str()) {
                return Err(GeometryError::DuplicateLabel(c.label.clone()));
            }
            if !c.capsule.is_valid() || c.velocity.iter().any(|v| !v.iter().all(|x| x.is_finite())) {
                return Err(GeometryError::NonFinite(c.label.clone()));
            }
        }
        Ok(())
    }

    /// Environment extrapolated by `dt` at constant endpoint velocity.
    pub fn advanced(&self, dt: f64) -> EnvironmentState {
        let step = |c: &LabeledCapsule| LabeledCapsule { capsule: c.advanced(dt), ..c.clone() };
        EnvironmentState {
            human: self.human.iter().map(step).collect(),
            obstacles: self.obstacles.iter().map(step).collect(),
            blocks: self.blocks.clone(),
            timestamp: self.timestamp + dt,
        }
    }
}

/// Closest robot/environment pair found by [`min_env_distance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPair {
    /// Index into the FK capsule list.
    pub robot: usize,
    /// Index into `EnvironmentState::capsules()`.
    pub env: usize,
    /// Axis parameter on the robot capsule.
    pub robot_param: f64,
    /// Axis parameter on the environment capsule.
    pub env_param: f64,
    pub robot_point: Vec3,
    pub env_point: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceQuery {
    pub distance: f64,
    pub pair: Option<ClosestPair>,
}

pub fn min_env_distance(robot: &[Capsule], env: &EnvironmentState, spec: &SafetySpec) -> DistanceQuery {
    let mut best = DistanceQuery { distance: NO_AVOID_SENTINEL, pair: None };
    for (ei, e) in env.capsules().enumerate() {
        if !spec.is_avoid(&e.label) {
            continue;
        }
        for (ri, r) in robot.iter().enumerate() {
            let cp = r.closest_axis_points(&e.capsule);
            let d = cp.distance() - r.radius - e.capsule.radius;
            if best.pair.is_none() || d < best.distance {
                best = DistanceQuery {
                    distance: d,
                    pair: Some(ClosestPair {
                        robot: ri,
                        env: ei,
                        robot_param: cp.s,
                        env_param: cp.t,
                        robot_point: cp.p,
                        env_point: cp.q,
                    }),
                };
            }
        }
    }
    best
}

/// Velocity of the point at axis parameter `s` on FK capsule `index`.
pub fn robot_point_velocity(model: &ArmModel, q: &[f64], qdot: &[f64], index: usize, s: f64) -> Result<Vec3, GeometryError> {
    const H: f64 = 1e-6;
    model.check_dimension(qdot)?;
    let shifted = |sign: f64| -> Result<Vec3, GeometryError> {
        let qs: Vec<f64> = q.iter().zip(qdot).map(|(a, v)| a + sign * H * v).collect();
        Ok(model.forward_kinematics(&qs)?[index].point_at(s))
    };
    Ok((shifted(1.0)? - shifted(-1.0)?) / (2.0 * H))
}

/// Rate of change of the closest-pair distance: relative velocity of the two
/// witness points projected onto the line joining them.
pub fn distance_rate(
    pair: Option<&ClosestPair>,
    model: &ArmModel,
    q: &[f64],
    qdot: &[f64],
    env: &EnvironmentState,
) -> Result<f64, GeometryError> {
    let pair = pair.ok_or(GeometryError::NoAvoidCapsule)?;
    let env_capsule = env.capsule(pair.env).ok_or(GeometryError::NoAvoidCapsule)?;
    let v_robot = robot_point_velocity(model, q, qdot, pair.robot, pair.robot_param)?;
    let v_env = env_capsule.point_velocity(pair.env_param);
    let delta = pair.robot_point - pair.env_point;
    let n = delta.norm();
    if n < 1e-12 {
        return Ok(0.0);
    }
    Ok((v_robot - v_env).dot(&(delta / n)))
}
