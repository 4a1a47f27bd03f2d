//! Offline collaboration policy: (intention, task progress) -> robot goal.

use std::collections::BTreeMap;

use nalgebra::UnitQuaternion;
use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Vec3};
use crate::intention::IntentionLabel;
use crate::task_graph::{NodeId, TaskGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "surface")]
pub enum GoalKind {
    DisplaySurface(u8),
    HoldCurrent,
    Alert,
}

/// Per-level policy shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule")]
pub enum LevelRule {
    /// Reaching any block of a listed group displays that group's surface;
    /// anything else holds.
    Display { groups: BTreeMap<u8, Vec<IntentionLabel>> },
    /// Intentions outside the admissible set of the current node raise an
    /// alert; anything else holds.
    GuardAdmissible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    /// Keyed by graph level.
    pub levels: BTreeMap<u8, LevelRule>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PolicyError {
    #[error("policy table has no rule for level {0}")]
    MissingLevel(u8),
    #[error("surface {0} has no display pose")]
    UnknownSurface(u8),
    #[error("display pose {0} orientation is not normalized")]
    BadOrientation(u8),
}

impl PolicyTable {
    /// Display rule between surfaces, guard rule while a surface is open.
    pub fn for_graph(graph: &TaskGraph) -> Self {
        let per_surface = graph.surfaces.values().map(Vec::len).max().unwrap_or(0) as u8;
        let groups: BTreeMap<u8, Vec<IntentionLabel>> = graph
            .surfaces
            .iter()
            .map(|(s, blocks)| (*s, blocks.iter().map(|b| IntentionLabel::Reach(*b)).collect()))
            .collect();
        let mut levels = BTreeMap::new();
        levels.insert(0, LevelRule::Display { groups: groups.clone() });
        for l in 1..per_surface {
            levels.insert(l, LevelRule::GuardAdmissible);
        }
        levels.insert(per_surface, LevelRule::Display { groups });
        Self { levels }
    }

    pub fn validate(&self, graph: &TaskGraph) -> Result<(), PolicyError> {
        for n in &graph.nodes {
            if !self.levels.contains_key(&n.level) {
                return Err(PolicyError::MissingLevel(n.level));
            }
        }
        Ok(())
    }
}

/// Goal for intention `h` at node `state`.
pub fn collaborate(
    h: IntentionLabel,
    state: NodeId,
    graph: &TaskGraph,
    table: &PolicyTable,
) -> Result<GoalKind, PolicyError> {
    let node = graph.nodes.get(state).map(|n| n.level).unwrap_or(0);
    match table.levels.get(&node).ok_or(PolicyError::MissingLevel(node))? {
        LevelRule::Display { groups } => Ok(groups
            .iter()
            .find(|(_, members)| members.contains(&h))
            .map(|(s, _)| GoalKind::DisplaySurface(*s))
            .unwrap_or(GoalKind::HoldCurrent)),
        LevelRule::GuardAdmissible => match h.block() {
            None => Ok(GoalKind::HoldCurrent),
            Some(b) if graph.valid_next_blocks(state).contains(&b) => Ok(GoalKind::HoldCurrent),
            Some(_) => Ok(GoalKind::Alert),
        },
    }
}

/// Container presentation poses keyed by surface id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplayPoses {
    pub poses: BTreeMap<u8, Pose>,
}

impl DisplayPoses {
    pub fn validate(&self) -> Result<(), PolicyError> {
        for (s, p) in &self.poses {
            if (p.orientation.as_ref().norm() - 1.0).abs() > 1e-9 {
                return Err(PolicyError::BadOrientation(*s));
            }
        }
        Ok(())
    }

    /// Smallest orientation angle (rad) between any two poses.
    pub fn min_pairwise_angle(&self) -> f64 {
        let v: Vec<&Pose> = self.poses.values().collect();
        let mut best = f64::INFINITY;
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                best = best.min(v[i].orientation.angle_to(&v[j].orientation));
            }
        }
        best
    }
}

/// Result of resolving a goal against the current target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalTarget {
    pub pose: Pose,
    pub alert: bool,
}

/// End-effector target for `goal`. Hold and alert keep the current target;
/// alert additionally raises the flag.
pub fn goal_pose(goal: GoalKind, current: &Pose, displays: &DisplayPoses) -> Result<GoalTarget, PolicyError> {
    match goal {
        GoalKind::DisplaySurface(s) => displays
            .poses
            .get(&s)
            .map(|p| GoalTarget { pose: *p, alert: false })
            .ok_or(PolicyError::UnknownSurface(s)),
        GoalKind::HoldCurrent => Ok(GoalTarget { pose: *current, alert: false }),
        GoalKind::Alert => Ok(GoalTarget { pose: *current, alert: true }),
    }
}

/// Unit quaternion helper used by scenario construction.
pub fn pose(position: [f64; 3], orientation: UnitQuaternion<f64>) -> Pose {
    Pose::new(Vec3::from(position), orientation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task_graph::Insertion;

    fn node_after(g: &TaskGraph, blocks: &[u8]) -> NodeId {
        let obs: Vec<_> = blocks.iter().map(|&b| Insertion { block: b, time: 0.0 }).collect();
        g.infer_progress(&obs).unwrap().node
    }

    #[test]
    fn surface_complete_reach_displays_its_surface() {
        let g = TaskGraph::default_assembly();
        let t = PolicyTable::for_graph(&g);
        let s = node_after(&g, &[1, 2, 3]);
        assert_eq!(g.nodes[s].level, 3);
        assert_eq!(collaborate(IntentionLabel::Reach(4), s, &g, &t).unwrap(), GoalKind::DisplaySurface(2));
        assert_eq!(collaborate(IntentionLabel::Reach(12), s, &g, &t).unwrap(), GoalKind::DisplaySurface(4));
    }

    #[test]
    fn idle_holds_everywhere() {
        let g = TaskGraph::default_assembly();
        let t = PolicyTable::for_graph(&g);
        for n in &g.nodes {
            assert_eq!(collaborate(IntentionLabel::Idle, n.id, &g, &t).unwrap(), GoalKind::HoldCurrent);
        }
    }

    #[test]
    fn off_surface_reach_mid_surface_alerts() {
        let g = TaskGraph::default_assembly();
        let t = PolicyTable::for_graph(&g);
        let s = node_after(&g, &[2]);
        assert_eq!(g.nodes[s].level, 1);
        assert_eq!(collaborate(IntentionLabel::Reach(7), s, &g, &t).unwrap(), GoalKind::Alert);
        assert_eq!(collaborate(IntentionLabel::Reach(3), s, &g, &t).unwrap(), GoalKind::HoldCurrent);
    }

    #[test]
    fn total_and_never_alerts_on_admissible() {
        let g = TaskGraph::default_assembly();
        let t = PolicyTable::for_graph(&g);
        t.validate(&g).unwrap();
        for n in &g.nodes {
            let admissible = g.valid_next_blocks(n.id);
            for h in IntentionLabel::all() {
                let goal = collaborate(h, n.id, &g, &t).unwrap();
                assert_eq!(goal, collaborate(h, n.id, &g, &t).unwrap());
                if h.block().is_some_and(|b| admissible.contains(&b)) {
                    assert_ne!(goal, GoalKind::Alert);
                }
            }
        }
    }

    #[test]
    fn goal_pose_semantics() {
        let displays = DisplayPoses {
            poses: [(1, pose([0.5, 0.0, 0.4], UnitQuaternion::identity()))].into(),
        };
        let current = pose([0.1, 0.2, 0.3], UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3));
        assert_eq!(goal_pose(GoalKind::HoldCurrent, &current, &displays).unwrap().pose, current);
        let a = goal_pose(GoalKind::Alert, &current, &displays).unwrap();
        assert!(a.alert);
        assert_eq!(a.pose, current);
        let d1 = goal_pose(GoalKind::DisplaySurface(1), &current, &displays).unwrap();
        let d2 = goal_pose(GoalKind::DisplaySurface(1), &d1.pose, &displays).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(goal_pose(GoalKind::DisplaySurface(3), &current, &displays), Err(PolicyError::UnknownSurface(3)));
    }
}
