//! Communication and measurement graphs.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Undirected simple graph with sorted adjacency lists.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Self { adj: vec![Vec::new(); n] }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Self::empty(n);
        for &(a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    pub fn complete(n: usize) -> Self {
        let adj = (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect();
        Self { adj }
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &edges)
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for (u, v) in [(a, b), (b, a)] {
            if let Err(pos) = self.adj[u].binary_search(&v) {
                self.adj[u].insert(pos, v);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    /// Hop distances from `src`; `usize::MAX` marks unreachable nodes.
    pub fn hops_from(&self, src: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.len()];
        let mut queue = VecDeque::new();
        dist[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.is_empty() || self.hops_from(0).iter().all(|&d| d != usize::MAX)
    }

    /// Longest shortest path, `None` when disconnected.
    pub fn diameter(&self) -> Option<usize> {
        let mut best = 0;
        for s in 0..self.len() {
            for d in self.hops_from(s) {
                if d == usize::MAX {
                    return None;
                }
                best = best.max(d);
            }
        }
        Some(best)
    }

    /// Subgraph induced by `nodes` (sorted, deduplicated), relabelled `0..nodes.len()`.
    pub fn induced(&self, nodes: &[usize]) -> Graph {
        let mut g = Graph::empty(nodes.len());
        for (a, &u) in nodes.iter().enumerate() {
            for (b, &v) in nodes.iter().enumerate().skip(a + 1) {
                if self.has_edge(u, v) {
                    g.add_edge(a, b);
                }
            }
        }
        g
    }
}

/// Who can talk to whom and who measures what at one time step.
///
/// Entity indices: agents `0..n_agents`, objects `n_agents..n_agents + n_objects`.
#[derive(Clone, Debug, PartialEq)]
pub struct TopologySnapshot {
    n_agents: usize,
    n_objects: usize,
    comm: Graph,
    meas: Vec<Vec<usize>>,
    meas_agents: Vec<Vec<usize>>,
    meas_objects: Vec<Vec<usize>>,
    observers: Vec<Vec<usize>>,
}

impl TopologySnapshot {
    /// Builds a snapshot from explicit sets. `meas[l]` lists entity indices.
    pub fn from_sets(
        n_agents: usize,
        n_objects: usize,
        comm: Graph,
        meas: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if comm.len() != n_agents || meas.len() != n_agents {
            return Err(Error::InvalidTopology("set count differs from agent count".into()));
        }
        let total = n_agents + n_objects;
        let mut meas_agents = vec![Vec::new(); n_agents];
        let mut meas_objects = vec![Vec::new(); n_agents];
        let mut observers = vec![Vec::new(); n_objects];
        let mut meas_sorted = Vec::with_capacity(n_agents);
        for (l, set) in meas.into_iter().enumerate() {
            let mut set = set;
            set.sort_unstable();
            set.dedup();
            for &k in &set {
                if k == l || k >= total {
                    return Err(Error::InvalidTopology(format!("agent {l} measures invalid entity {k}")));
                }
                if k < n_agents {
                    if !comm.has_edge(l, k) {
                        return Err(Error::InvalidTopology(format!(
                            "agent {l} measures agent {k} without a communication link"
                        )));
                    }
                    meas_agents[l].push(k);
                } else {
                    meas_objects[l].push(k - n_agents);
                    observers[k - n_agents].push(l);
                }
            }
            meas_sorted.push(set);
        }
        Ok(Self { n_agents, n_objects, comm, meas: meas_sorted, meas_agents, meas_objects, observers })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_objects(&self) -> usize {
        self.n_objects
    }

    pub fn comm(&self) -> &Graph {
        &self.comm
    }

    /// `C_l`.
    pub fn comm_set(&self, l: usize) -> &[usize] {
        self.comm.neighbors(l)
    }

    /// `M_l` as entity indices.
    pub fn meas_set(&self, l: usize) -> &[usize] {
        &self.meas[l]
    }

    /// `M^A_l`.
    pub fn meas_agents(&self, l: usize) -> &[usize] {
        &self.meas_agents[l]
    }

    /// `M^O_l` as object indices `0..n_objects`.
    pub fn meas_objects(&self, l: usize) -> &[usize] {
        &self.meas_objects[l]
    }

    /// `A_m`, sorted.
    pub fn observers(&self, m: usize) -> &[usize] {
        &self.observers[m]
    }

    pub fn object_entity(&self, m: usize) -> usize {
        self.n_agents + m
    }

    pub fn diameter(&self) -> Result<usize> {
        self.comm.diameter().ok_or(Error::CommGraphDisconnected)
    }
}

/// Range-based snapshot from entity positions (agents first, then objects).
///
/// Communication uses `distance < comm_range`, measurement `distance <= range`.
/// Agent-agent measurements require a communication link.
pub fn build_topology<T: Real>(
    positions: &[[T; 2]],
    n_agents: usize,
    comm_range: T,
    meas_ranges: &[T],
) -> Result<TopologySnapshot> {
    if meas_ranges.len() != n_agents || positions.len() < n_agents {
        return Err(Error::InvalidTopology("range or position count mismatch".into()));
    }
    let n_objects = positions.len() - n_agents;
    let dist = |a: usize, b: usize| crate::model::distance(positions[a], positions[b]);
    let mut comm = Graph::empty(n_agents);
    for a in 0..n_agents {
        for b in a + 1..n_agents {
            if dist(a, b) < comm_range {
                comm.add_edge(a, b);
            }
        }
    }
    if !comm.is_connected() {
        return Err(Error::CommGraphDisconnected);
    }
    let mut meas = vec![Vec::new(); n_agents];
    for (l, set) in meas.iter_mut().enumerate() {
        for k in 0..positions.len() {
            if k == l || dist(l, k) > meas_ranges[l] {
                continue;
            }
            if k < n_agents && !comm.has_edge(l, k) {
                continue;
            }
            set.push(k);
        }
    }
    TopologySnapshot::from_sets(n_agents, n_objects, comm, meas)
}
