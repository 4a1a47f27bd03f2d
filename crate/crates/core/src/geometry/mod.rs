//! Capsule geometry, serial-arm kinematics and robot/environment distance queries.

mod arm;
mod capsule;
mod environment;

pub use arm::{ArmFrames, ArmModel, Joint, Pose};
pub use capsule::{capsule_distance, segment_closest, Capsule, SegmentClosest, Vec3};
pub use environment::{
    distance_rate, min_env_distance, robot_point_velocity, ClosestPair, Contact, DistanceQuery, EnvironmentState,
    LabeledCapsule, SafetySpec, HUMAN_LABELS, NO_AVOID_SENTINEL,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GeometryError {
    #[error("joint vector has {got} entries, model has {expected} joints")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid arm model: {0}")]
    InvalidModel(String),
    #[error("no avoid-flagged capsule in scene")]
    NoAvoidCapsule,
    #[error("environment capsule `{0}` has no safety flag")]
    UnflaggedCapsule(String),
    #[error("duplicate environment capsule label `{0}`")]
    DuplicateLabel(String),
    #[error("non-finite geometry on `{0}`")]
    NonFinite(String),
}
