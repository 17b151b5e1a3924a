//! Slotted broadcast medium. Everything an agent learns from another agent
//! passes through here and is logged.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::particles::ParticleSet;
use crate::topology::Graph;

use super::ledger::CommLedger;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    BeliefBroadcast,
    ConsensusAvg,
    ConsensusMax,
    ConsensusMin,
    LdtHandover,
}

/// Candidate proposal source for one object during min-consensus.
#[derive(Clone, Debug, PartialEq)]
pub struct ProposalFrame<T> {
    pub variance: T,
    pub owner: usize,
    pub measurement: T,
    pub particles: Arc<ParticleSet<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload<T> {
    /// Equally weighted position particles of the sender's own belief.
    Belief(Arc<ParticleSet<T>>),
    /// Per-object consensus vectors, keyed by object index.
    Values(Vec<(usize, Arc<Vec<T>>)>),
    /// Current minimum frame per object (`None` while no candidate is known).
    Proposals(Vec<(usize, Option<ProposalFrame<T>>)>),
    /// Object belief handed to neighbours.
    Handover(Vec<(usize, Arc<ParticleSet<T>>)>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Delivery<T> {
    pub from: usize,
    pub slot: u64,
    pub phase: Phase,
    pub payload: Payload<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AccessEvent {
    Delivered { slot: u64, from: usize, to: usize, phase: Phase },
    Read { slot: u64, reader: usize, from: usize, phase: Phase },
}

/// Broadcast queue for one time step.
#[derive(Debug)]
pub struct Radio<T> {
    graph: Graph,
    slot: u64,
    pending: Vec<(usize, Delivery<T>)>,
    inbox: Vec<Vec<Delivery<T>>>,
    ledgers: Vec<CommLedger>,
    log: Vec<AccessEvent>,
    audit: bool,
}

impl<T: Clone> Radio<T> {
    pub fn new(graph: Graph, audit: bool) -> Self {
        let n = graph.len();
        Self {
            graph,
            slot: 0,
            pending: Vec::new(),
            inbox: vec![Vec::new(); n],
            ledgers: vec![CommLedger::default(); n],
            log: Vec::new(),
            audit,
        }
    }

    /// Queues `payload` for every neighbour of `sender` and charges `scalars`.
    pub fn broadcast(&mut self, sender: usize, phase: Phase, payload: Payload<T>, scalars: u64) {
        let l = &mut self.ledgers[sender];
        match phase {
            Phase::BeliefBroadcast => l.n_nbp += scalars,
            Phase::ConsensusAvg | Phase::ConsensusMax => l.n_c += scalars,
            Phase::ConsensusMin => l.n_ap += scalars,
            Phase::LdtHandover => l.n_ho += scalars,
        }
        for &to in self.graph.neighbors(sender) {
            if self.audit {
                self.log.push(AccessEvent::Delivered { slot: self.slot, from: sender, to, phase });
            }
            self.pending.push((to, Delivery { from: sender, slot: self.slot, phase, payload: payload.clone() }));
        }
    }

    /// Slot boundary: queued payloads become readable.
    pub fn end_slot(&mut self) {
        for (to, d) in self.pending.drain(..) {
            self.inbox[to].push(d);
        }
        self.slot += 1;
    }

    /// Removes and returns `reader`'s deliveries of one phase, ordered by sender.
    pub fn take(&mut self, reader: usize, phase: Phase) -> Vec<Delivery<T>> {
        let (mut out, keep): (Vec<_>, Vec<_>) = self.inbox[reader].drain(..).partition(|d| d.phase == phase);
        self.inbox[reader] = keep;
        out.sort_by_key(|d| (d.slot, d.from));
        if self.audit {
            for d in &out {
                self.log.push(AccessEvent::Read { slot: d.slot, reader, from: d.from, phase });
            }
        }
        out
    }

    pub fn slots(&self) -> u64 {
        self.slot
    }

    pub fn ledgers(&self) -> &[CommLedger] {
        &self.ledgers
    }

    pub fn log(&self) -> &[AccessEvent] {
        &self.log
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }
}

/// Checks that every read matches an earlier delivery over a graph edge.
/// Returns the offending events.
pub fn audit_log(graph: &Graph, log: &[AccessEvent]) -> Vec<AccessEvent> {
    use std::collections::HashSet;
    let mut delivered = HashSet::new();
    let mut bad = Vec::new();
    for ev in log {
        match *ev {
            AccessEvent::Delivered { slot, from, to, phase } => {
                if !graph.has_edge(from, to) {
                    bad.push(*ev);
                }
                delivered.insert((slot, from, to, phase));
            }
            AccessEvent::Read { slot, reader, from, phase } => {
                if !delivered.contains(&(slot, from, reader, phase)) {
                    bad.push(*ev);
                }
            }
        }
    }
    bad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isolated_sender_is_still_charged() {
        let mut r: Radio<f64> = Radio::new(Graph::empty(2), true);
        r.broadcast(0, Phase::BeliefBroadcast, Payload::Values(vec![]), 7);
        r.end_slot();
        assert_eq!(r.ledgers()[0].n_nbp, 7);
        assert!(r.take(1, Phase::BeliefBroadcast).is_empty());
    }

    #[test]
    fn deliveries_arrive_after_the_slot() {
        let mut r: Radio<f64> = Radio::new(Graph::path(3), true);
        r.broadcast(1, Phase::ConsensusAvg, Payload::Values(vec![(0, Arc::new(vec![1.0]))]), 1);
        assert!(r.take(0, Phase::ConsensusAvg).is_empty());
        r.end_slot();
        assert_eq!(r.take(0, Phase::ConsensusAvg).len(), 1);
        assert_eq!(r.take(2, Phase::ConsensusAvg).len(), 1);
        assert!(audit_log(r.graph(), r.log()).is_empty());
    }

    #[test]
    fn audit_flags_reads_without_delivery() {
        let g = Graph::path(3);
        let log = [AccessEvent::Read { slot: 0, reader: 0, from: 2, phase: Phase::BeliefBroadcast }];
        assert_eq!(audit_log(&g, &log).len(), 1);
    }
}
