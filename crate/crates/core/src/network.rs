//! Linear branched vessel networks as validated directed acyclic graphs.
//!
//! Pipes are directed edges (flow direction), nodes are the inlet, the
//! outlet, and the connection points between pipes. A [`Network`] is
//! immutable once built.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default cap on the number of enumerated paths.
pub const DEFAULT_PATH_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PipeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for PipeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("network has no pipes")]
    Empty,
    #[error("duplicate pipe id {0}")]
    DuplicatePipe(PipeId),
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("pipe {pipe}: {what} must be positive and finite, got {value}")]
    NonPositiveGeometry {
        pipe: PipeId,
        what: &'static str,
        value: f64,
    },
    #[error("pipe {0} starts and ends at the same node")]
    SelfLoop(PipeId),
    #[error("cycle detected through node {0}")]
    CycleDetected(NodeId),
    #[error("expected exactly one inlet (in-degree 0), found {0:?}")]
    InletCount(Vec<NodeId>),
    #[error("expected exactly one outlet (out-degree 0), found {0:?}")]
    OutletCount(Vec<NodeId>),
    #[error("node {node} has in-degree {in_degree} and out-degree {out_degree}, which is not an inlet, outlet, series node, bifurcation, or junction")]
    InvalidDegree {
        node: NodeId,
        in_degree: usize,
        out_degree: usize,
    },
    #[error("dangling node {0}: not on any inlet-to-outlet path")]
    Dangling(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown pipe {0}")]
    UnknownPipe(PipeId),
    #[error("node {0} is not a junction")]
    NotAJunction(NodeId),
    #[error("more than {limit} paths between {from} and {to}")]
    PathLimitExceeded { from: NodeId, to: NodeId, limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Inlet,
    Outlet,
    Bifurcation,
    Junction,
    Series,
}

impl NodeKind {
    /// Classifies a node from its degrees, `None` for combinations an LBVN
    /// does not allow (e.g. a node that both merges and splits).
    pub fn classify(in_degree: usize, out_degree: usize) -> Option<Self> {
        match (in_degree, out_degree) {
            (0, 1) => Some(Self::Inlet),
            (1, 0) => Some(Self::Outlet),
            (1, 1) => Some(Self::Series),
            (1, o) if o >= 2 => Some(Self::Bifurcation),
            (i, 1) if i >= 2 => Some(Self::Junction),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipe {
    pub id: PipeId,
    pub from: NodeId,
    pub to: NodeId,
    /// meters
    pub length: f64,
    /// meters
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
}

/// Input to [`Network::build`]: the raw pipe list plus an optional explicit
/// node ordering.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetworkSpec {
    pub label: Option<String>,
    /// Node ids in the desired order. Nodes referenced by pipes but missing
    /// here are appended in order of first appearance.
    pub nodes: Vec<NodeId>,
    pub pipes: Vec<Pipe>,
}

/// One junction traversed by a path and the inflow pipe the path uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JunctionCrossing {
    pub junction: NodeId,
    pub via: PipeId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    /// Pipes in flow order.
    pub pipes: Vec<PipeId>,
    /// Junctions strictly inside the path, in flow order.
    pub junctions: Vec<JunctionCrossing>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    label: Option<String>,
    pipes: Vec<Pipe>,
    nodes: Vec<Node>,
    pipe_index: HashMap<PipeId, usize>,
    node_index: HashMap<NodeId, usize>,
    /// Outgoing pipe indices per node, sorted by pipe id.
    out_pipes: Vec<Vec<usize>>,
    /// Incoming pipe indices per node, sorted by pipe id.
    in_pipes: Vec<Vec<usize>>,
    inlet: usize,
    outlet: usize,
}

impl Network {
    pub fn build(spec: NetworkSpec) -> Result<Self, NetworkError> {
        let NetworkSpec {
            label,
            nodes: node_order,
            pipes,
        } = spec;
        if pipes.is_empty() {
            return Err(NetworkError::Empty);
        }

        let mut pipe_index = HashMap::with_capacity(pipes.len());
        for (i, p) in pipes.iter().enumerate() {
            if pipe_index.insert(p.id, i).is_some() {
                return Err(NetworkError::DuplicatePipe(p.id));
            }
            for (what, value) in [("length", p.length), ("radius", p.radius)] {
                if !(value.is_finite() && value > 0.0) {
                    return Err(NetworkError::NonPositiveGeometry {
                        pipe: p.id,
                        what,
                        value,
                    });
                }
            }
            if p.from == p.to {
                return Err(NetworkError::SelfLoop(p.id));
            }
        }

        let mut node_ids: Vec<NodeId> = Vec::new();
        let mut node_index: HashMap<NodeId, usize> = HashMap::new();
        for &id in &node_order {
            if node_index.insert(id, node_ids.len()).is_some() {
                return Err(NetworkError::DuplicateNode(id));
            }
            node_ids.push(id);
        }
        for p in &pipes {
            for id in [p.from, p.to] {
                if let std::collections::hash_map::Entry::Vacant(e) = node_index.entry(id) {
                    e.insert(node_ids.len());
                    node_ids.push(id);
                }
            }
        }

        let v = node_ids.len();
        let mut out_pipes = vec![Vec::new(); v];
        let mut in_pipes = vec![Vec::new(); v];
        for (i, p) in pipes.iter().enumerate() {
            out_pipes[node_index[&p.from]].push(i);
            in_pipes[node_index[&p.to]].push(i);
        }
        for list in out_pipes.iter_mut().chain(in_pipes.iter_mut()) {
            list.sort_by_key(|&i| pipes[i].id);
        }

        let inlets: Vec<usize> = (0..v).filter(|&n| in_pipes[n].is_empty()).collect();
        let outlets: Vec<usize> = (0..v).filter(|&n| out_pipes[n].is_empty()).collect();

        // Cycle check before inlet/outlet counting: a pure cycle has no inlet
        // and the cycle is the more useful diagnostic.
        if let Some(n) = find_cycle(&out_pipes, &pipes, &node_index) {
            return Err(NetworkError::CycleDetected(node_ids[n]));
        }
        if inlets.len() != 1 {
            return Err(NetworkError::InletCount(
                inlets.iter().map(|&n| node_ids[n]).collect(),
            ));
        }
        if outlets.len() != 1 {
            return Err(NetworkError::OutletCount(
                outlets.iter().map(|&n| node_ids[n]).collect(),
            ));
        }

        let mut nodes = Vec::with_capacity(v);
        for n in 0..v {
            let (i, o) = (in_pipes[n].len(), out_pipes[n].len());
            let kind = NodeKind::classify(i, o).ok_or(NetworkError::InvalidDegree {
                node: node_ids[n],
                in_degree: i,
                out_degree: o,
            })?;
            nodes.push(Node {
                id: node_ids[n],
                kind,
            });
        }

        let net = Self {
            label,
            pipes,
            nodes,
            pipe_index,
            node_index,
            out_pipes,
            in_pipes,
            inlet: inlets[0],
            outlet: outlets[0],
        };
        net.check_reachability()?;
        Ok(net)
    }

    /// Every node must be reachable from the inlet and reach the outlet.
    fn check_reachability(&self) -> Result<(), NetworkError> {
        let forward = self.reachable(self.inlet, |n| {
            self.out_pipes[n]
                .iter()
                .map(|&p| self.node_index[&self.pipes[p].to])
                .collect()
        });
        let backward = self.reachable(self.outlet, |n| {
            self.in_pipes[n]
                .iter()
                .map(|&p| self.node_index[&self.pipes[p].from])
                .collect()
        });
        for n in 0..self.nodes.len() {
            if !(forward[n] && backward[n]) {
                return Err(NetworkError::Dangling(self.nodes[n].id));
            }
        }
        Ok(())
    }

    fn reachable(&self, start: usize, next: impl Fn(usize) -> Vec<usize>) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(n) = stack.pop() {
            for m in next(n) {
                if !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        seen
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Pipes in definition order.
    pub fn pipes(&self) -> &[Pipe] {
        &self.pipes
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// E
    pub fn pipe_count(&self) -> usize {
        self.pipes.len()
    }

    /// V
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// J
    pub fn junction_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Junction).count()
    }

    pub fn inlet(&self) -> NodeId {
        self.nodes[self.inlet].id
    }

    pub fn outlet(&self) -> NodeId {
        self.nodes[self.outlet].id
    }

    pub fn pipe(&self, id: PipeId) -> Result<&Pipe, NetworkError> {
        self.pipe_index
            .get(&id)
            .map(|&i| &self.pipes[i])
            .ok_or(NetworkError::UnknownPipe(id))
    }

    /// Position of a pipe in [`Network::pipes`].
    pub fn pipe_position(&self, id: PipeId) -> Result<usize, NetworkError> {
        self.pipe_index
            .get(&id)
            .copied()
            .ok_or(NetworkError::UnknownPipe(id))
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, NetworkError> {
        self.node_position(id).map(|i| &self.nodes[i])
    }

    /// Position of a node in [`Network::nodes`].
    pub fn node_position(&self, id: NodeId) -> Result<usize, NetworkError> {
        self.node_index
            .get(&id)
            .copied()
            .ok_or(NetworkError::UnknownNode(id))
    }

    pub fn outflows(&self, node: NodeId) -> Result<Vec<PipeId>, NetworkError> {
        let n = self.node_position(node)?;
        Ok(self.out_pipes[n].iter().map(|&p| self.pipes[p].id).collect())
    }

    pub fn inflows(&self, node: NodeId) -> Result<Vec<PipeId>, NetworkError> {
        let n = self.node_position(node)?;
        Ok(self.in_pipes[n].iter().map(|&p| self.pipes[p].id).collect())
    }

    /// The inflow pipe set of a junction.
    pub fn inflow_set(&self, junction: NodeId) -> Result<Vec<PipeId>, NetworkError> {
        if self.node(junction)?.kind != NodeKind::Junction {
            return Err(NetworkError::NotAJunction(junction));
        }
        self.inflows(junction)
    }

    pub fn enumerate_paths(&self, from: NodeId, to: NodeId) -> Result<Vec<Path>, NetworkError> {
        self.enumerate_paths_with_limit(from, to, DEFAULT_PATH_LIMIT)
    }

    /// All directed paths from `from` to `to`, ordered lexicographically by
    /// pipe-id sequence. An unreachable target gives an empty list.
    pub fn enumerate_paths_with_limit(
        &self,
        from: NodeId,
        to: NodeId,
        limit: usize,
    ) -> Result<Vec<Path>, NetworkError> {
        let start = self.node_position(from)?;
        let target = self.node_position(to)?;
        let mut out = Vec::new();
        if start == target {
            return Ok(out);
        }
        let mut stack: Vec<usize> = Vec::new();
        self.dfs(start, target, limit, &mut stack, &mut out)
            .map_err(|()| NetworkError::PathLimitExceeded { from, to, limit })?;
        Ok(out)
    }

    fn dfs(
        &self,
        node: usize,
        target: usize,
        limit: usize,
        stack: &mut Vec<usize>,
        out: &mut Vec<Path>,
    ) -> Result<(), ()> {
        if node == target {
            if out.len() == limit {
                return Err(());
            }
            out.push(self.make_path(stack));
            return Ok(());
        }
        for &p in &self.out_pipes[node] {
            stack.push(p);
            let next = self.node_index[&self.pipes[p].to];
            self.dfs(next, target, limit, stack, out)?;
            stack.pop();
        }
        Ok(())
    }

    fn make_path(&self, pipe_positions: &[usize]) -> Path {
        let pipes: Vec<PipeId> = pipe_positions.iter().map(|&p| self.pipes[p].id).collect();
        let mut junctions = Vec::new();
        if let Some((_, inner)) = pipe_positions.split_last() {
            for &p in inner {
                let head = self.node_index[&self.pipes[p].to];
                if self.nodes[head].kind == NodeKind::Junction {
                    junctions.push(JunctionCrossing {
                        junction: self.nodes[head].id,
                        via: self.pipes[p].id,
                    });
                }
            }
        }
        Path { pipes, junctions }
    }

    /// Copy of this network's description with one pipe removed. The result
    /// still has to pass [`Network::build`].
    pub fn without_pipe(&self, id: PipeId) -> Result<NetworkSpec, NetworkError> {
        self.pipe(id)?;
        let pipes: Vec<Pipe> = self.pipes.iter().filter(|p| p.id != id).cloned().collect();
        let used: BTreeSet<NodeId> = pipes.iter().flat_map(|p| [p.from, p.to]).collect();
        Ok(NetworkSpec {
            label: self.label.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| n.id)
                .filter(|n| used.contains(n))
                .collect(),
            pipes,
        })
    }

    pub fn to_spec(&self) -> NetworkSpec {
        NetworkSpec {
            label: self.label.clone(),
            nodes: self.nodes.iter().map(|n| n.id).collect(),
            pipes: self.pipes.clone(),
        }
    }
}

/// Iterative three-colour DFS; returns a node on a cycle if one exists.
fn find_cycle(
    out_pipes: &[Vec<usize>],
    pipes: &[Pipe],
    node_index: &HashMap<NodeId, usize>,
) -> Option<usize> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Grey,
        Black,
    }
    let mut mark = vec![Mark::White; out_pipes.len()];
    for root in 0..out_pipes.len() {
        if mark[root] != Mark::White {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        mark[root] = Mark::Grey;
        while let Some(&mut (n, ref mut cursor)) = stack.last_mut() {
            if let Some(&p) = out_pipes[n].get(*cursor) {
                *cursor += 1;
                let m = node_index[&pipes[p].to];
                match mark[m] {
                    Mark::Grey => return Some(m),
                    Mark::White => {
                        mark[m] = Mark::Grey;
                        stack.push((m, 0));
                    }
                    Mark::Black => {}
                }
            } else {
                mark[n] = Mark::Black;
                stack.pop();
            }
        }
    }
    None
}
