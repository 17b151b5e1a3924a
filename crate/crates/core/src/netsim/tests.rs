use super::*;
use crate::model::MotionModel;
use crate::particles::ParticleSet;
use crate::rng::{Purpose, RngStream, StreamKey};
use crate::scalar::Real;
use crate::topology::{build_topology, TopologySnapshot};

const BOX: f64 = 30.0;

fn config(method: Method, iterations: usize, policy: ProposalPolicy) -> AlgorithmConfig<f64> {
    AlgorithmConfig {
        method,
        particles: 200,
        iterations,
        consensus_iterations: 4,
        diameter: Some(3),
        sigma_v2: 1.0,
        ldt: false,
        proposal: policy,
        diffuse_variance: 50.0,
        partner_variance_cap: 100.0,
        localization_threshold: 10.0,
        object_motion: MotionModel::static_model(2),
        audit: true,
    }
}

fn uniform_box(j: usize, key: usize, seed: u64) -> ParticleSet<f64> {
    let mut r = RngStream::new(seed, StreamKey::new(key, 0, 0, Purpose::Prior));
    let states = (0..2 * j).map(|_| -BOX + 2.0 * BOX * f64::unit_uniform(&mut r)).collect();
    ParticleSet::uniform(2, states).unwrap()
}

struct World {
    positions: Vec<[f64; 2]>,
    n_agents: usize,
    anchors: usize,
}

impl World {
    fn standard(objects: usize) -> Self {
        let mut positions = vec![[0.0, 0.0], [20.0, 0.0], [0.0, 20.0], [10.0, 10.0], [15.0, 12.0]];
        positions.extend([[5.0, 15.0], [12.0, 4.0]].into_iter().take(objects));
        World { positions, n_agents: 5, anchors: 3 }
    }

    fn sim(&self, cfg: AlgorithmConfig<f64>, seed: u64) -> NetworkSim<f64> {
        let j = cfg.particles;
        let agents = (0..self.n_agents)
            .map(|l| {
                if l < self.anchors {
                    AgentSetup {
                        anchor: true,
                        belief: ParticleSet::point_mass(&self.positions[l]),
                        motion: MotionModel::static_model(2),
                        prior_box: None,
                        onset: None,
                    }
                } else {
                    AgentSetup {
                        anchor: false,
                        belief: uniform_box(j, l, seed),
                        motion: MotionModel::static_model(2),
                        prior_box: Some(PriorBox { lo: [-BOX; 2], hi: [BOX; 2] }),
                        onset: None,
                    }
                }
            })
            .collect();
        let objects: Vec<ObjectPrior<f64>> = (self.n_agents..self.positions.len())
            .map(|k| ObjectPrior { belief: uniform_box(j, k, seed), prior_box: Some(PriorBox { lo: [-BOX; 2], hi: [BOX; 2] }) })
            .collect();
        NetworkSim::new(cfg, seed, agents, &objects).unwrap()
    }

    fn step_inputs(&self, time: usize, seed: u64) -> (TopologySnapshot, Vec<Vec<(usize, f64)>>) {
        let topo = build_topology(&self.positions, self.n_agents, 50.0, &vec![25.0; self.n_agents]).unwrap();
        let meas = (0..self.n_agents)
            .map(|l| {
                topo.meas_set(l)
                    .iter()
                    .map(|&k| {
                        let mut r = RngStream::new(seed, StreamKey::new(l, time, 0, Purpose::MeasurementNoise).with_peer(k));
                        let d = crate::model::distance(self.positions[l], self.positions[k]);
                        (k, d + f64::standard_normal(&mut r))
                    })
                    .collect()
            })
            .collect();
        (topo, meas)
    }
}

fn run(world: &World, cfg: AlgorithmConfig<f64>, steps: usize, seed: u64) -> Vec<StepReport<f64>> {
    let mut sim = world.sim(cfg, seed);
    (1..=steps)
        .map(|n| {
            let (topo, meas) = world.step_inputs(n, seed);
            sim.run_time_step(&topo, &meas).unwrap()
        })
        .collect()
}

fn params(cfg: &AlgorithmConfig<f64>, objects: usize, alt: bool) -> CountParams {
    CountParams {
        iterations: cfg.iterations as u64,
        particles: cfg.particles as u64,
        consensus: cfg.consensus_iterations as u64,
        diameter: cfg.diameter.unwrap() as u64,
        position_dim: 2,
        objects: objects as u64,
        alt_proposal: alt,
    }
}

#[test]
fn ledger_and_delay_match_closed_form() {
    let world = World::standard(2);
    let cfg = config(Method::Pm, 2, ProposalPolicy::FirstStep);
    let reports = run(&world, cfg.clone(), 2, 1);
    for (n, rep) in reports.iter().enumerate() {
        let p = params(&cfg, 2, n == 0);
        for l in &rep.ledgers {
            assert_eq!(*l, p.closed_form());
        }
        assert_eq!(rep.delay, compute_delay(&p));
    }
}

#[test]
fn no_objects_costs_only_beliefs() {
    let world = World::standard(0);
    let cfg = config(Method::Pm, 3, ProposalPolicy::FirstStep);
    let rep = &run(&world, cfg.clone(), 1, 2)[0];
    assert_eq!(rep.delay, 3);
    for l in &rep.ledgers {
        assert_eq!(l.total(), 3 * 200 * 2);
    }
}

#[test]
fn reference_method_spends_a_slot_per_iteration_on_beliefs() {
    let world = World::standard(2);
    let cfg = config(Method::Rm, 2, ProposalPolicy::FirstStep);
    let reps = run(&world, cfg, 2, 3);
    assert_eq!(reps[0].delay, 2 * (1 + 4 + 3 + 3));
    assert_eq!(reps[1].delay, 2 * (1 + 4 + 3));
}

#[test]
fn audit_is_clean_and_objects_agree() {
    let world = World::standard(2);
    for method in [Method::Pm, Method::Rm] {
        for rep in run(&world, config(method, 2, ProposalPolicy::FirstStep), 3, 4) {
            assert_eq!(rep.audit_violations, 0);
            assert!(rep.objects_consistent);
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let world = World::standard(2);
    let a = run(&world, config(Method::Pm, 2, ProposalPolicy::FirstStep), 3, 5);
    let b = run(&world, config(Method::Pm, 2, ProposalPolicy::FirstStep), 3, 5);
    assert_eq!(a, b);
}

#[test]
fn anchors_only_methods_track_identically() {
    let world = World { positions: vec![[0.0, 0.0], [20.0, 0.0], [0.0, 20.0], [8.0, 9.0]], n_agents: 3, anchors: 3 };
    let pm = run(&world, config(Method::Pm, 1, ProposalPolicy::FirstStep), 3, 6);
    let rm = run(&world, config(Method::Rm, 1, ProposalPolicy::FirstStep), 3, 6);
    for (a, b) in pm.iter().zip(&rm) {
        assert_eq!(a.object_estimates, b.object_estimates);
    }
    let est = pm[2].object_estimates[0][0].as_ref().unwrap();
    assert!(crate::model::distance([est[0], est[1]], [8.0, 9.0]) < 1.5);
}

#[test]
fn agents_and_objects_get_localized() {
    let world = World::standard(2);
    let reps = run(&world, config(Method::Pm, 2, ProposalPolicy::FirstStep), 4, 7);
    let last = reps.last().unwrap();
    let p = last.agent_estimates.len() - 1;
    for l in 3..5 {
        let e = &last.agent_estimates[p][l];
        assert!(crate::model::distance([e[0], e[1]], world.positions[l]) < 2.0, "agent {l}: {e:?}");
        assert!(last.localized[l]);
    }
    for m in 0..2 {
        let e = last.object_estimates[p][m].as_ref().unwrap();
        assert!(crate::model::distance([e[0], e[1]], world.positions[5 + m]) < 2.0, "object {m}: {e:?}");
    }
}

#[test]
fn local_tracking_hands_beliefs_over() {
    let world = World::standard(2);
    let mut cfg = config(Method::Pm, 1, ProposalPolicy::FirstStep);
    cfg.ldt = true;
    let reps = run(&world, cfg, 3, 8);
    for rep in &reps {
        assert_eq!(rep.audit_violations, 0);
        assert!(rep.objects_consistent);
        assert!(rep.ledgers.iter().any(|l| l.n_ho > 0));
    }
    let e = reps[2].object_estimates[0][0].as_ref().unwrap();
    assert!(crate::model::distance([e[0], e[1]], world.positions[5]) < 2.0);
}
