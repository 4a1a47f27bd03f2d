use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{Capsule, GeometryError, Vec3};

/// One revolute joint followed by its rigid link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    /// Translation from the previous joint frame to this joint, in the previous frame.
    pub offset: Vec3,
    /// Rotation axis in the joint frame (unit vector).
    pub axis: Vec3,
    /// Capsule of the link driven by this joint, in the joint frame.
    pub capsule: Capsule,
    pub lower: f64,
    pub upper: f64,
    pub max_velocity: f64,
    pub max_acceleration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    pub base: Isometry3<f64>,
    /// Static pedestal in the base frame. Present in every FK result as index 0.
    pub base_capsule: Option<Capsule>,
    pub joints: Vec<Joint>,
    /// Tool point in the last joint frame.
    pub tool_offset: Vec3,
}

/// End-effector pose target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(position: Vec3, orientation: UnitQuaternion<f64>) -> Self {
        Self { position, orientation }
    }

    /// Position error (m) and orientation error (rad).
    pub fn error_to(&self, other: &Pose) -> (f64, f64) {
        (
            (self.position - other.position).norm(),
            self.orientation.angle_to(&other.orientation),
        )
    }
}

/// World-frame link frames plus the tool pose.
#[derive(Debug, Clone)]
pub struct ArmFrames {
    pub joints: Vec<Isometry3<f64>>,
    pub tool: Pose,
}

impl ArmModel {
    pub fn link_count(&self) -> usize {
        self.joints.len()
    }

    pub fn capsule_count(&self) -> usize {
        self.joints.len() + usize::from(self.base_capsule.is_some())
    }

    /// Index into the FK capsule list of the first moving link.
    pub fn first_link_index(&self) -> usize {
        usize::from(self.base_capsule.is_some())
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.joints.is_empty() {
            return Err(GeometryError::InvalidModel("arm needs at least one joint".into()));
        }
        for (i, j) in self.joints.iter().enumerate() {
            if !(j.lower < j.upper) {
                return Err(GeometryError::InvalidModel(format!("joint {i}: lower limit must be below upper")));
            }
            if !(j.max_velocity > 0.0 && j.max_acceleration > 0.0) {
                return Err(GeometryError::InvalidModel(format!("joint {i}: rate limits must be positive")));
            }
            if (j.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(GeometryError::InvalidModel(format!("joint {i}: axis must be unit length")));
            }
            if !j.capsule.is_valid() {
                return Err(GeometryError::InvalidModel(format!("joint {i}: invalid capsule")));
            }
        }
        Ok(())
    }

    pub fn check_dimension(&self, q: &[f64]) -> Result<(), GeometryError> {
        if q.len() != self.joints.len() {
            return Err(GeometryError::DimensionMismatch { expected: self.joints.len(), got: q.len() });
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.len() == self.joints.len()
            && q.iter().zip(&self.joints).all(|(v, j)| *v >= j.lower - 1e-12 && *v <= j.upper + 1e-12)
    }

    pub fn clamp_to_limits(&self, q: &mut [f64]) {
        for (v, j) in q.iter_mut().zip(&self.joints) {
            *v = v.clamp(j.lower, j.upper);
        }
    }

    pub fn frames(&self, q: &[f64]) -> Result<ArmFrames, GeometryError> {
        self.check_dimension(q)?;
        let mut t = self.base;
        let mut joints = Vec::with_capacity(q.len());
        for (angle, joint) in q.iter().zip(&self.joints) {
            let rot = UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_unchecked(joint.axis), *angle);
            t = t * Translation3::from(joint.offset) * rot;
            joints.push(t);
        }
        let tip = t * Translation3::from(self.tool_offset);
        Ok(ArmFrames {
            joints,
            tool: Pose::new(tip.translation.vector, tip.rotation),
        })
    }

    /// World-frame capsules: the base capsule (if any) then one per link.
    pub fn forward_kinematics(&self, q: &[f64]) -> Result<Vec<Capsule>, GeometryError> {
        let frames = self.frames(q)?;
        let mut out = Vec::with_capacity(self.capsule_count());
        if let Some(base) = &self.base_capsule {
            out.push(base.transformed(&self.base));
        }
        for (frame, joint) in frames.joints.iter().zip(&self.joints) {
            out.push(joint.capsule.transformed(frame));
        }
        Ok(out)
    }

    pub fn tool_pose(&self, q: &[f64]) -> Result<Pose, GeometryError> {
        Ok(self.frames(q)?.tool)
    }

    /// Upper bound on tool distance from the first joint.
    pub fn reach(&self) -> f64 {
        self.joints.iter().skip(1).map(|j| j.offset.norm()).sum::<f64>() + self.tool_offset.norm()
    }

    pub fn shoulder(&self) -> Vec3 {
        let first = self.joints.first().map(|j| j.offset).unwrap_or_else(Vec3::zeros);
        (self.base * Translation3::from(first)).translation.vector
    }

    /// Six revolute joints with alternating vertical / horizontal axes on a
    /// 0.1 m pedestal. Link lengths 0.30, 0.30, 0.25, 0.15, 0.10, 0.10 m.
    pub fn default_six_dof() -> Self {
        let lengths = [0.30, 0.30, 0.25, 0.15, 0.10, 0.10];
        let radius = 0.05;
        let z = Vector3::z();
        let y = Vector3::y();
        let limits = [
            (-3.1, 3.1),
            (-2.2, 2.2),
            (-3.1, 3.1),
            (-2.5, 2.5),
            (-3.1, 3.1),
            (-2.2, 2.2),
        ];
        let velocity = [1.4, 1.4, 1.6, 1.6, 2.0, 2.0];
        let mut joints = Vec::new();
        let mut prev_len = 0.10;
        for i in 0..6 {
            joints.push(Joint {
                offset: Vec3::new(0.0, 0.0, prev_len),
                axis: if i % 2 == 0 { z } else { y },
                capsule: Capsule::new(Vec3::zeros(), Vec3::new(0.0, 0.0, lengths[i]), radius),
                lower: limits[i].0,
                upper: limits[i].1,
                max_velocity: velocity[i],
                max_acceleration: 12.0,
            });
            prev_len = lengths[i];
        }
        Self {
            base: Isometry3::identity(),
            base_capsule: Some(Capsule::new(Vec3::zeros(), Vec3::new(0.0, 0.0, 0.10), 0.08)),
            joints,
            tool_offset: Vec3::new(0.0, 0.0, lengths[5]),
        }
    }
}
