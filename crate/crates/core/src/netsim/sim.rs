//! Drives all agents through one time step, slot by slot.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::consensus::metropolis_weights;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::topology::{Graph, TopologySnapshot};

use super::ledger::CommLedger;
use super::node::{AgentNode, AgentSetup, AlgorithmConfig, Group, Method, ObjectPrior};
use super::radio::{audit_log, Payload, Phase, Radio};

/// Dimension of the measured substate.
pub const POSITION_DIM: usize = 2;

/// Outputs of one time step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport<T> {
    pub time: usize,
    /// `[p - 1][agent]` state estimates after each message passing iteration.
    pub agent_estimates: Vec<Vec<Vec<T>>>,
    /// `[p - 1][object]` estimates; `None` if no agent holds the object.
    pub object_estimates: Vec<Vec<Option<Vec<T>>>>,
    pub ledgers: Vec<CommLedger>,
    pub delay: u64,
    /// Number of objects whose proposal was disseminated.
    pub alt_objects: usize,
    pub diameter: usize,
    pub localized: Vec<bool>,
    pub degenerate: bool,
    /// Reads without a matching broadcast delivery (always zero unless the simulator is broken).
    pub audit_violations: usize,
    /// Whether all holders of each object ended with bitwise-identical beliefs.
    pub objects_consistent: bool,
}

/// A network of agents executing the distributed algorithm.
#[derive(Clone, Debug)]
pub struct NetworkSim<T> {
    cfg: AlgorithmConfig<T>,
    seed: u64,
    nodes: Vec<AgentNode<T>>,
    n_objects: usize,
    time: usize,
}

fn rows_of<T: Real>(graph: &Graph, ids: &[usize]) -> Result<BTreeMap<usize, (T, Vec<(usize, T)>)>> {
    let w = metropolis_weights::<T>(graph)?;
    Ok((0..graph.len())
        .map(|i| (ids[i], (w.self_weight(i), w.row(i).iter().map(|&(k, v)| (ids[k], v)).collect())))
        .collect())
}

impl<T: Real> NetworkSim<T> {
    pub fn new(cfg: AlgorithmConfig<T>, seed: u64, agents: Vec<AgentSetup<T>>, objects: &[ObjectPrior<T>]) -> Result<Self> {
        if cfg.particles == 0 || cfg.iterations == 0 {
            return Err(Error::Config("particle and iteration counts must be positive".into()));
        }
        let n = agents.len();
        let nodes = agents.into_iter().enumerate().map(|(l, s)| AgentNode::new(l, n, s, objects)).collect();
        Ok(Self { cfg, seed, nodes, n_objects: objects.len(), time: 0 })
    }

    pub fn config(&self) -> &AlgorithmConfig<T> {
        &self.cfg
    }

    pub fn nodes(&self) -> &[AgentNode<T>] {
        &self.nodes
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn n_objects(&self) -> usize {
        self.n_objects
    }

    fn build_groups(&self, topo: &TopologySnapshot, diameter: usize) -> Result<Vec<Group<T>>> {
        let n = self.nodes.len();
        let all: Vec<usize> = (0..n).collect();
        let full = if self.cfg.ldt { None } else { Some(Arc::new(rows_of(topo.comm(), &all)?)) };
        let mut groups = Vec::with_capacity(self.n_objects);
        for m in 0..self.n_objects {
            let observers = topo.observers(m);
            let (members, rows, rounds, scale) = match &full {
                Some(rows) => (all.clone(), rows.clone(), diameter, n),
                None => {
                    let part: Vec<usize> = observers.iter().copied().filter(|&l| self.nodes[l].holds(m)).collect();
                    if part.is_empty() {
                        (part, Arc::new(BTreeMap::new()), 0, 0)
                    } else {
                        let sub = topo.comm().induced(&part);
                        let d = sub.diameter().ok_or(Error::LdtSubgraphDisconnected { object: m })?;
                        let rows = rows_of(&sub, &part)?;
                        let k = part.len();
                        (part, Arc::new(rows), d, k)
                    }
                }
            };
            let alt = match members.first() {
                Some(&first) if !observers.is_empty() => {
                    let a = self.nodes[first].object_alt(m, &self.cfg);
                    debug_assert!(members.iter().all(|&l| self.nodes[l].object_alt(m, &self.cfg) == a));
                    a
                }
                _ => false,
            };
            groups.push(Group { members, rows, rounds, scale, alt });
        }
        Ok(groups)
    }

    /// Executes prediction, `P` message passing iterations and estimation.
    /// `measurements[l]` lists `(entity, range)` for agent `l`.
    pub fn run_time_step(&mut self, topo: &TopologySnapshot, measurements: &[Vec<(usize, T)>]) -> Result<StepReport<T>> {
        let n_agents = self.nodes.len();
        if topo.n_agents() != n_agents || topo.n_objects() != self.n_objects || measurements.len() != n_agents {
            return Err(Error::InvalidTopology("snapshot does not match the network".into()));
        }
        let actual = topo.diameter()?;
        let diameter = match self.cfg.diameter {
            Some(i) if actual > i => {
                return Err(Error::InvalidTopology(format!("graph diameter {actual} exceeds the configured {i}")))
            }
            Some(i) => i,
            None => actual,
        };
        let time = self.time + 1;
        let cfg = self.cfg.clone();
        let seed = self.seed;
        for (l, node) in self.nodes.iter_mut().enumerate() {
            node.begin_step(time, &measurements[l], &cfg, seed)?;
        }
        let groups = self.build_groups(topo, diameter)?;
        let active: Vec<bool> = groups.iter().map(|g| !g.members.is_empty()).collect();
        let any_active = active.iter().any(|&a| a);
        let alt_objects = groups.iter().filter(|g| g.alt && !g.members.is_empty()).count();
        let j = cfg.particles as u64;
        let l_dim = POSITION_DIM as u64;
        let mut radio: Radio<T> = Radio::new(topo.comm().clone(), cfg.audit);

        let mut agent_estimates = Vec::with_capacity(cfg.iterations);
        let mut object_estimates = Vec::with_capacity(cfg.iterations);
        for p in 1..=cfg.iterations {
            let last = p == cfg.iterations;
            for (l, node) in self.nodes.iter().enumerate() {
                radio.broadcast(l, Phase::BeliefBroadcast, Payload::Belief(node.belief_payload()), j * l_dim);
            }
            let mut beliefs_pending = true;
            let mut own_est = vec![Vec::new(); n_agents];
            if cfg.method == Method::Rm {
                radio.end_slot();
                beliefs_pending = false;
                for (l, node) in self.nodes.iter_mut().enumerate() {
                    node.receive_beliefs(radio.take(l, Phase::BeliefBroadcast));
                    own_est[l] = node.update_own(p, &cfg, seed)?;
                }
            }

            if alt_objects > 0 {
                for node in self.nodes.iter_mut() {
                    node.init_frames(&groups, &cfg);
                }
                let rounds = groups.iter().filter(|g| g.alt).map(|g| g.rounds).max().unwrap_or(0);
                for r in 0..rounds {
                    for (l, node) in self.nodes.iter().enumerate() {
                        if let Some((payload, count)) = node.frame_payload(&groups, r) {
                            radio.broadcast(l, Phase::ConsensusMin, payload, count as u64 * j * l_dim);
                        }
                    }
                    radio.end_slot();
                    beliefs_pending = false;
                    for (l, node) in self.nodes.iter_mut().enumerate() {
                        node.receive_frames(radio.take(l, Phase::ConsensusMin), &groups, r);
                    }
                }
            }

            for node in self.nodes.iter_mut() {
                node.init_consensus(p, &groups, &cfg, seed)?;
            }
            if any_active {
                let c = cfg.consensus_iterations;
                for r in 0..c {
                    for (l, node) in self.nodes.iter().enumerate() {
                        if let Some((payload, count)) = node.values_payload(&groups, r, |_| c, false) {
                            radio.broadcast(l, Phase::ConsensusAvg, payload, count as u64 * j);
                        }
                    }
                    radio.end_slot();
                    beliefs_pending = false;
                    for (l, node) in self.nodes.iter_mut().enumerate() {
                        node.average_round(radio.take(l, Phase::ConsensusAvg), &groups, r, c)?;
                    }
                }
                for node in self.nodes.iter_mut() {
                    node.prepare_max(&groups)?;
                }
                let rounds = groups.iter().map(|g| g.rounds).max().unwrap_or(0);
                for r in 0..rounds {
                    for (l, node) in self.nodes.iter().enumerate() {
                        if let Some((payload, count)) = node.values_payload(&groups, r, |g| g.rounds, true) {
                            radio.broadcast(l, Phase::ConsensusMax, payload, count as u64 * j);
                        }
                    }
                    radio.end_slot();
                    beliefs_pending = false;
                    for (l, node) in self.nodes.iter_mut().enumerate() {
                        node.max_round(radio.take(l, Phase::ConsensusMax), &groups, r);
                    }
                }
            }

            let mut obj_est: Vec<Option<Vec<T>>> = vec![None; self.n_objects];
            for node in self.nodes.iter_mut() {
                let est = node.finish_objects(p, last, &groups, &cfg, seed)?;
                for (m, e) in est {
                    obj_est[m].get_or_insert(e);
                }
                node.coast_objects(&groups);
            }
            for (m, slot) in obj_est.iter_mut().enumerate() {
                if slot.is_none() {
                    *slot = self.nodes.iter().find_map(|node| node.object_estimate(m));
                }
            }
            object_estimates.push(obj_est);

            if cfg.method == Method::Pm {
                if beliefs_pending {
                    radio.end_slot();
                }
                for (l, node) in self.nodes.iter_mut().enumerate() {
                    node.receive_beliefs(radio.take(l, Phase::BeliefBroadcast));
                    own_est[l] = node.update_own(p, &cfg, seed)?;
                    if !last {
                        node.update_outgoing(p, &cfg, seed)?;
                    }
                    node.rotate();
                }
            }
            agent_estimates.push(own_est);
        }

        let observed: Vec<bool> = (0..self.n_objects).map(|m| !topo.observers(m).is_empty()).collect();
        for node in self.nodes.iter_mut() {
            node.end_step(&groups, &observed, &cfg, seed)?;
        }
        if cfg.ldt && any_active {
            let d = cfg.object_motion.dim() as u64;
            for (l, node) in self.nodes.iter().enumerate() {
                let items = node.handover_payload(&groups);
                if !items.is_empty() {
                    let count = items.len() as u64;
                    radio.broadcast(l, Phase::LdtHandover, Payload::Handover(items), count * j * d);
                }
            }
            radio.end_slot();
            for (l, node) in self.nodes.iter_mut().enumerate() {
                node.receive_handover(radio.take(l, Phase::LdtHandover), &groups);
            }
        }

        let audit_violations = if cfg.audit { audit_log(topo.comm(), radio.log()).len() } else { 0 };
        let objects_consistent = (0..self.n_objects).all(|m| {
            let mut held = self.nodes.iter().filter_map(|node| node.object_belief(m));
            match held.next() {
                Some(first) => held.all(|b| b == first),
                None => true,
            }
        });
        self.time = time;
        Ok(StepReport {
            time,
            agent_estimates,
            object_estimates,
            ledgers: radio.ledgers().to_vec(),
            delay: radio.slots(),
            alt_objects,
            diameter,
            localized: self.nodes.iter().map(|node| node.localized_at().is_some()).collect(),
            degenerate: self.nodes.iter().any(|node| node.degenerate()),
            audit_violations,
            objects_consistent,
        })
    }
}
