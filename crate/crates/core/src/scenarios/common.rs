//! Pieces shared by the scenario generators.

use crate::model::distance;
use crate::netsim::{CommLedger, StepReport, POSITION_DIM};
use crate::particles::ParticleSet;
use crate::rng::{Purpose, RngStream, StreamKey};
use crate::scalar::Real;
use crate::topology::TopologySnapshot;

use super::metrics::{EntityClass, EntityRecord, StepRecord};

/// `J` particles with positions uniform on `[lo, hi]²`. With `velocity`, two
/// more components are drawn from `N(mean, var I)`.
pub fn uniform_prior<T: Real>(
    count: usize,
    bounds: [f64; 2],
    velocity: Option<([T; 2], T)>,
    rng: &mut RngStream,
) -> ParticleSet<T> {
    let (lo, width) = (T::lit(bounds[0]), T::lit(bounds[1] - bounds[0]));
    let dim = if velocity.is_some() { 4 } else { 2 };
    let mut states = Vec::with_capacity(count * dim);
    for _ in 0..count {
        states.push(lo + width * T::unit_uniform(rng));
        states.push(lo + width * T::unit_uniform(rng));
        if let Some((mean, var)) = velocity {
            let sd = var.sqrt();
            states.push(mean[0] + sd * T::standard_normal(rng));
            states.push(mean[1] + sd * T::standard_normal(rng));
        }
    }
    ParticleSet::uniform(dim, states).expect("consistent dimensions")
}

/// Noisy ranges for every measurement in the snapshot. Entity `k`'s position is `positions[k]`.
pub fn measure<T: Real>(
    positions: &[[T; 2]],
    topo: &TopologySnapshot,
    sigma_v2: T,
    seed: u64,
    time: usize,
) -> Vec<Vec<(usize, T)>> {
    let sd = sigma_v2.sqrt();
    (0..topo.n_agents())
        .map(|l| {
            topo.meas_set(l)
                .iter()
                .map(|&k| {
                    let mut rng = RngStream::new(seed, StreamKey::new(l, time, 0, Purpose::MeasurementNoise).with_peer(k));
                    (k, distance(positions[l], positions[k]) + sd * T::standard_normal(&mut rng))
                })
                .collect()
        })
        .collect()
}

/// Ledger of the agent with the largest total count.
pub fn busiest(ledgers: &[CommLedger]) -> CommLedger {
    ledgers.iter().copied().max_by_key(|l| l.total()).unwrap_or_default()
}

fn pos<T: Real>(v: &[T]) -> [f64; 2] {
    [v[0].as_f64(), v[1].as_f64()]
}

/// Converts a network step report into a trace record. Anchors (`0..anchors`)
/// are left out; objects without any estimate are skipped.
pub fn step_record<T: Real>(report: &StepReport<T>, truth: &[[T; 2]], n_agents: usize, anchors: usize) -> StepRecord {
    let mut entities = Vec::new();
    for (i, (agents, objects)) in report.agent_estimates.iter().zip(&report.object_estimates).enumerate() {
        let iteration = i + 1;
        for (l, est) in agents.iter().enumerate().skip(anchors) {
            entities.push(EntityRecord {
                class: EntityClass::Agent,
                id: l - anchors,
                iteration,
                truth: pos(&truth[l]),
                estimate: pos(est),
            });
        }
        for (m, est) in objects.iter().enumerate() {
            if let Some(est) = est {
                entities.push(EntityRecord {
                    class: EntityClass::Object,
                    id: m,
                    iteration,
                    truth: pos(&truth[n_agents + m]),
                    estimate: pos(est),
                });
            }
        }
    }
    debug_assert!(truth.iter().all(|p| p.len() == POSITION_DIM));
    StepRecord {
        time: report.time,
        final_iteration: report.agent_estimates.len(),
        entities,
        ledger: busiest(&report.ledgers),
        delay: report.delay,
        degenerate: report.degenerate,
        audit_violations: report.audit_violations,
    }
}

/// Counts consecutive degenerate steps; `true` once the budget is exhausted.
#[derive(Clone, Copy, Debug, Default)]
pub struct DegenerateBudget {
    streak: usize,
}

impl DegenerateBudget {
    pub const LIMIT: usize = 3;

    pub fn exhausted_after(&mut self, degenerate: bool) -> bool {
        self.streak = if degenerate { self.streak + 1 } else { 0 };
        self.streak >= Self::LIMIT
    }
}
