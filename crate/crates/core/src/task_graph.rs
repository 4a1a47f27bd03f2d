//! AND/OR assembly graphs and task-progress inference.
//!
//! Nodes are assembly states. Each edge is one block insertion; edges that
//! leave a node partway through a surface are tagged `And` (every sibling
//! block must eventually be inserted), edges leaving a surface-complete node
//! are tagged `Or` (alternative surfaces and orderings).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub type NodeId = usize;
pub type BlockId = u8;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TaskGraphError {
    #[error("graph is invalid: {0}")]
    Invalid(String),
    #[error("observation sequence inconsistent with the task graph after {consistent_prefix} events")]
    Inconsistent { consistent_prefix: usize },
    #[error("block {block} cannot be inserted from node {node}")]
    Inadmissible { node: NodeId, block: BlockId },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Connector {
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskNode {
    pub id: NodeId,
    /// Blocks done on the surface currently being worked: 0 at the root and
    /// when no surface is active, 1..k-1 mid-surface, k when it was just completed.
    pub level: u8,
    pub completed: BTreeSet<BlockId>,
    pub active_surface: Option<u8>,
}

impl TaskNode {
    pub fn depth(&self) -> usize {
        self.completed.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub block: BlockId,
    pub connector: Connector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGraph {
    pub nodes: Vec<TaskNode>,
    pub edges: Vec<TaskEdge>,
    pub root: NodeId,
    pub terminals: Vec<NodeId>,
    /// Blocks per surface, surface ids starting at 1.
    pub surfaces: BTreeMap<u8, Vec<BlockId>>,
    #[serde(skip)]
    outgoing: Vec<Vec<usize>>,
}

/// Inferred progress with its posterior mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Progress {
    pub node: NodeId,
    pub posterior: f64,
    pub consistent: Vec<NodeId>,
}

/// Insertion event as observed in the workspace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Insertion {
    pub block: BlockId,
    pub time: f64,
}

impl TaskGraph {
    pub fn new(
        nodes: Vec<TaskNode>,
        edges: Vec<TaskEdge>,
        root: NodeId,
        terminals: Vec<NodeId>,
        surfaces: BTreeMap<u8, Vec<BlockId>>,
    ) -> Result<Self, TaskGraphError> {
        let mut g = Self { nodes, edges, root, terminals, surfaces, outgoing: Vec::new() };
        g.index()?;
        Ok(g)
    }

    /// Rebuild adjacency after deserialization and validate.
    pub fn index(&mut self) -> Result<(), TaskGraphError> {
        let n = self.nodes.len();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                return Err(TaskGraphError::Invalid(format!("node at position {i} has id {}", node.id)));
            }
        }
        if self.root >= n {
            return Err(TaskGraphError::Invalid("root out of range".into()));
        }
        let mut outgoing = vec![Vec::new(); n];
        for (k, e) in self.edges.iter().enumerate() {
            if e.from >= n || e.to >= n {
                return Err(TaskGraphError::Invalid(format!("edge {k} references a missing node")));
            }
            outgoing[e.from].push(k);
        }
        let terminal: BTreeSet<_> = self.terminals.iter().copied().collect();
        for (i, out) in outgoing.iter().enumerate() {
            if out.is_empty() && !terminal.contains(&i) {
                return Err(TaskGraphError::Invalid(format!("non-terminal node {i} has no outgoing connector")));
            }
        }
        self.outgoing = outgoing;
        self.check_acyclic()
    }

    fn check_acyclic(&self) -> Result<(), TaskGraphError> {
        // Kahn's algorithm.
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        for e in &self.edges {
            indeg[e.to] += 1;
        }
        let mut stack: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(v) = stack.pop() {
            seen += 1;
            for &k in &self.outgoing[v] {
                let t = self.edges[k].to;
                indeg[t] -= 1;
                if indeg[t] == 0 {
                    stack.push(t);
                }
            }
        }
        if seen != n {
            return Err(TaskGraphError::Invalid("graph has a cycle".into()));
        }
        Ok(())
    }

    pub fn node(&self, id: NodeId) -> Result<&TaskNode, TaskGraphError> {
        self.nodes.get(id).ok_or(TaskGraphError::UnknownNode(id))
    }

    pub fn outgoing(&self, id: NodeId) -> impl Iterator<Item = &TaskEdge> {
        self.outgoing.get(id).into_iter().flatten().map(move |&k| &self.edges[k])
    }

    pub fn block_count(&self) -> usize {
        self.surfaces.values().map(Vec::len).sum()
    }

    pub fn surface_of(&self, block: BlockId) -> Option<u8> {
        self.surfaces.iter().find(|(_, b)| b.contains(&block)).map(|(s, _)| *s)
    }

    pub fn is_terminal(&self, id: NodeId) -> bool {
        self.terminals.contains(&id)
    }

    /// Graph for `surfaces` surfaces of `per_surface` blocks each: surfaces in
    /// any order, blocks within a surface in any order, one surface at a time.
    pub fn surfaces_in_sequence(surfaces: u8, per_surface: u8) -> Self {
        let surface_map: BTreeMap<u8, Vec<BlockId>> = (1..=surfaces)
            .map(|s| (s, ((s - 1) * per_surface + 1..=s * per_surface).collect()))
            .collect();
        let mut nodes: Vec<TaskNode> = Vec::new();
        let mut lookup: BTreeMap<(BTreeSet<BlockId>, Option<u8>), NodeId> = BTreeMap::new();
        let mut edges = Vec::new();

        let mut intern = |nodes: &mut Vec<TaskNode>, completed: BTreeSet<BlockId>, active: Option<u8>, level: u8| {
            *lookup.entry((completed.clone(), active)).or_insert_with(|| {
                nodes.push(TaskNode { id: nodes.len(), level, completed, active_surface: active });
                nodes.len() - 1
            })
        };
        let root = intern(&mut nodes, BTreeSet::new(), None, 0);
        let mut frontier = vec![root];
        while let Some(id) = frontier.pop() {
            let node = nodes[id].clone();
            let (candidates, connector): (Vec<BlockId>, Connector) = match node.active_surface {
                Some(s) => (
                    surface_map[&s].iter().copied().filter(|b| !node.completed.contains(b)).collect(),
                    Connector::And,
                ),
                None => (
                    surface_map
                        .values()
                        .filter(|bs| bs.iter().all(|b| !node.completed.contains(b)))
                        .flatten()
                        .copied()
                        .collect(),
                    Connector::Or,
                ),
            };
            for b in candidates {
                let s = surface_map.iter().find(|(_, bs)| bs.contains(&b)).map(|(s, _)| *s).unwrap();
                let mut completed = node.completed.clone();
                completed.insert(b);
                let done_on_surface = surface_map[&s].iter().filter(|x| completed.contains(x)).count() as u8;
                let (active, level) = if done_on_surface == per_surface { (None, per_surface) } else { (Some(s), done_on_surface) };
                let before = nodes.len();
                let child = intern(&mut nodes, completed, active, level);
                if nodes.len() > before {
                    frontier.push(child);
                }
                edges.push(TaskEdge { from: id, to: child, block: b, connector });
            }
        }
        let total = surfaces as usize * per_surface as usize;
        let terminals = nodes.iter().filter(|n| n.completed.len() == total).map(|n| n.id).collect();
        edges.sort_by_key(|e| (e.from, e.block));
        Self::new(nodes, edges, root, terminals, surface_map).expect("generated graph is valid")
    }

    /// The 4 surfaces x 3 blocks co-assembly task.
    pub fn default_assembly() -> Self {
        Self::surfaces_in_sequence(4, 3)
    }

    /// Nodes reachable from `from` by consuming exactly `blocks`, or the
    /// length of the longest consumable prefix.
    fn trace(&self, from: NodeId, blocks: impl IntoIterator<Item = BlockId>) -> Result<BTreeSet<NodeId>, usize> {
        let mut current: BTreeSet<NodeId> = [from].into();
        for (i, b) in blocks.into_iter().enumerate() {
            let next: BTreeSet<NodeId> = current
                .iter()
                .flat_map(|&n| self.outgoing(n).filter(move |e| e.block == b).map(|e| e.to))
                .collect();
            if next.is_empty() {
                return Err(i);
            }
            current = next;
        }
        Ok(current)
    }

    /// Most probable node given the observed insertions, with a uniform prior
    /// and a 0/1 path-consistency likelihood. Ties go to the deepest node,
    /// then the lowest id.
    pub fn infer_progress(&self, obs: &[Insertion]) -> Result<Progress, TaskGraphError> {
        let prior = vec![1.0; self.nodes.len()];
        self.infer_progress_with_prior(obs, &prior)
    }

    /// Same as [`Self::infer_progress`] with an explicit unnormalized prior.
    pub fn infer_progress_with_prior(&self, obs: &[Insertion], prior: &[f64]) -> Result<Progress, TaskGraphError> {
        let consistent = self
            .trace(self.root, obs.iter().map(|o| o.block))
            .map_err(|consistent_prefix| TaskGraphError::Inconsistent { consistent_prefix })?;
        let mass: f64 = consistent.iter().map(|&n| prior[n]).sum();
        let best = consistent
            .iter()
            .copied()
            .max_by(|&a, &b| {
                prior[a]
                    .total_cmp(&prior[b])
                    .then(self.nodes[a].depth().cmp(&self.nodes[b].depth()))
                    .then(b.cmp(&a))
            })
            .expect("consistent set is nonempty");
        Ok(Progress { node: best, posterior: prior[best] / mass, consistent: consistent.into_iter().collect() })
    }

    /// Reach intentions admissible from `node`, as block ids.
    pub fn valid_next_blocks(&self, node: NodeId) -> BTreeSet<BlockId> {
        self.outgoing(node).map(|e| e.block).collect()
    }

    pub fn advance(&self, node: NodeId, block: BlockId) -> Result<NodeId, TaskGraphError> {
        self.node(node)?;
        self.outgoing(node)
            .find(|e| e.block == block)
            .map(|e| e.to)
            .ok_or(TaskGraphError::Inadmissible { node, block })
    }
}
