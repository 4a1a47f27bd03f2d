pub mod geometry;
pub mod intention;
pub mod planner;
pub mod policy;
pub mod registry;
pub mod safe_control;
pub mod sim;
pub mod task_graph;
