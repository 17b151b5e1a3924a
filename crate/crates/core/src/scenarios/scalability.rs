//! Networks of growing size with a fresh random measurement topology at every
//! step, processed by centralized PM and the stacked-state particle filter.

use std::time::Instant;

use rand::seq::{index::sample, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::MotionModel;
use crate::particles::ParticleSet;
use crate::rng::{run_seed, Purpose, RngStream, StreamKey};
use crate::scalar::Real;
use crate::topology::{Graph, TopologySnapshot};

use super::central::{factors_of, CentralPm, StackedPf};
use super::common::measure;
use super::config::{MethodName, ScalabilityParams, ScenarioConfig, ScenarioKind};
use super::metrics::{EntityClass, EntityRecord, RunTrace, StepRecord};

fn params(cfg: &ScenarioConfig) -> Result<&ScalabilityParams> {
    match cfg.kind()? {
        ScenarioKind::Scalability(s) => Ok(s),
        _ => Err(Error::Config("not a scalability scenario".into())),
    }
}

/// Seed of one run at one network size.
pub fn size_seed(master: u64, size: [usize; 2], run: usize) -> u64 {
    run_seed(run_seed(master, size[0] * 100_003 + size[1]), run)
}

/// Measurement topology of one step. Entities: anchors `0..a`, mobile agents
/// `a..a+k`, objects after them.
///
/// Mobile agents and objects form a random cycle without adjacent objects;
/// every mobile agent measures both cycle neighbours and one or two random
/// anchors, every object is measured by one or two random anchors.
pub fn gen_scalability_topology(anchors: usize, agents: usize, objects: usize, seed: u64, time: usize) -> Result<TopologySnapshot> {
    if agents < 3 || objects > agents || anchors == 0 {
        return Err(Error::Config("need at least 3 mobile agents, one anchor and no more objects than agents".into()));
    }
    let mut rng = RngStream::new(seed, StreamKey::new(0, time, 0, Purpose::Topology));
    let mut order: Vec<usize> = (anchors..anchors + agents).collect();
    order.shuffle(&mut rng);
    let mut objs: Vec<usize> = (anchors + agents..anchors + agents + objects).collect();
    objs.shuffle(&mut rng);
    let mut gaps = vec![false; agents];
    for g in sample(&mut rng, agents, objects) {
        gaps[g] = true;
    }
    let mut cycle = Vec::with_capacity(agents + objects);
    let mut next_obj = objs.into_iter();
    for (i, &l) in order.iter().enumerate() {
        cycle.push(l);
        if gaps[i] {
            cycle.push(next_obj.next().expect("one object per chosen gap"));
        }
    }
    let n_agents = anchors + agents;
    let mut meas = vec![Vec::new(); n_agents];
    let mut comm = Graph::empty(n_agents);
    let len = cycle.len();
    for (i, &e) in cycle.iter().enumerate() {
        if e >= n_agents {
            continue;
        }
        for nb in [cycle[(i + len - 1) % len], cycle[(i + 1) % len]] {
            meas[e].push(nb);
            if nb < n_agents {
                comm.add_edge(e, nb);
            }
        }
        let count = if rng.random::<bool>() { 2 } else { 1 };
        for a in sample(&mut rng, anchors, count.min(anchors)) {
            meas[e].push(a);
            comm.add_edge(e, a);
        }
    }
    for o in n_agents..n_agents + objects {
        let count = if rng.random::<bool>() { 2 } else { 1 };
        for a in sample(&mut rng, anchors, count.min(anchors)) {
            meas[a].push(o);
        }
    }
    TopologySnapshot::from_sets(n_agents, objects, comm, meas)
}

fn gaussian_prior<T: Real>(mean: &[T], var: T, count: usize, rng: &mut RngStream) -> ParticleSet<T> {
    let sd = var.sqrt();
    let states = (0..count).flat_map(|_| mean.iter().map(|&m| m + sd * T::standard_normal(rng)).collect::<Vec<_>>()).collect();
    ParticleSet::uniform(mean.len(), states).expect("consistent dimensions")
}

fn records<T: Real>(est: &[Vec<T>], truth: &[[T; 2]], anchors: usize, agents: usize, iteration: usize, out: &mut Vec<EntityRecord>) {
    for k in anchors..truth.len() {
        let (class, id) = if k < anchors + agents { (EntityClass::Agent, k - anchors) } else { (EntityClass::Object, k - anchors - agents) };
        out.push(EntityRecord {
            class,
            id,
            iteration,
            truth: [truth[k][0].as_f64(), truth[k][1].as_f64()],
            estimate: [est[k][0].as_f64(), est[k][1].as_f64()],
        });
    }
}

fn central_record(time: usize, iterations: usize, entities: Vec<EntityRecord>) -> StepRecord {
    StepRecord {
        time,
        final_iteration: iterations,
        entities,
        ledger: Default::default(),
        delay: 0,
        degenerate: false,
        audit_violations: 0,
    }
}

/// PM and/or SPF on one run at one network size.
pub fn run_scalability<T: Real>(cfg: &ScenarioConfig, size: [usize; 2], run: usize) -> Result<Vec<RunTrace>> {
    let s = params(cfg)?;
    let [agents, objects] = size;
    let anchors = s.anchors.len();
    let seed = size_seed(cfg.seed, size, run);
    let j = cfg.algorithm.particles;
    let total = anchors + agents + objects;
    let agent_motion = MotionModel::constant_velocity(T::lit(cfg.model.agent_sigma_u2));
    let object_motion = MotionModel::constant_velocity(T::lit(cfg.model.object_sigma_u2));

    let mut state: Vec<Vec<T>> = s.anchors.iter().map(|a| vec![T::lit(a[0]), T::lit(a[1])]).collect();
    let mut priors: Vec<ParticleSet<T>> = state.iter().map(|a| ParticleSet::point_mass(a)).collect();
    let mut motions: Vec<MotionModel<T>> = vec![MotionModel::static_model(2); anchors];
    for k in anchors..total {
        let mut rng = RngStream::new(seed, StreamKey::new(k, 0, 0, Purpose::Placement));
        let x0 = vec![T::lit(s.field[0]) * T::unit_uniform(&mut rng), T::lit(s.field[1]) * T::unit_uniform(&mut rng), T::zero(), T::zero()];
        let mut hyper = RngStream::new(seed, StreamKey::new(k, 0, 0, Purpose::Hyperprior));
        let mv = T::lit(s.prior_mean_variance).sqrt();
        let mean: Vec<T> = x0.iter().map(|&x| x + mv * T::standard_normal(&mut hyper)).collect();
        let mut rng = RngStream::new(seed, StreamKey::new(k, 0, 0, Purpose::Prior));
        priors.push(gaussian_prior(&mean, T::lit(s.prior_variance), j, &mut rng));
        motions.push(if k < anchors + agents { agent_motion.clone() } else { object_motion.clone() });
        state.push(x0);
    }

    let want_pm = cfg.runs_method(MethodName::Pm);
    let want_spf = cfg.runs_method(MethodName::Spf);
    let sigma_v2 = T::lit(cfg.model.sigma_v2);
    let mut pm = if want_pm { Some(CentralPm::new(priors.clone(), motions.clone(), cfg.algorithm.iterations, sigma_v2, seed)?) } else { None };
    let mut spf = if want_spf { Some(StackedPf::new(&priors, &motions, sigma_v2, seed)?) } else { None };
    let mut pm_trace = RunTrace::new(MethodName::Pm, run, Some(size));
    let mut spf_trace = RunTrace::new(MethodName::Spf, run, Some(size));

    let mut next = vec![T::zero(); 4];
    for n in 1..=s.steps {
        for k in anchors..total {
            let mut rng = RngStream::new(seed, StreamKey::new(k, n, 0, Purpose::TruthMotion));
            motions[k].sample_into(&state[k], &mut next, &mut rng);
            state[k].copy_from_slice(&next);
        }
        let positions: Vec<[T; 2]> = state.iter().map(|x| [x[0], x[1]]).collect();
        let topo = gen_scalability_topology(anchors, agents, objects, seed, n)?;
        let meas = measure(&positions, &topo, sigma_v2, seed, n);
        let factors = factors_of(&topo, &meas);
        if let Some(pm) = pm.as_mut() {
            let start = Instant::now();
            let est = pm.step(&factors)?;
            pm_trace.step_seconds.push(start.elapsed().as_secs_f64());
            let mut entities = Vec::new();
            for (p, e) in est.iter().enumerate() {
                records(e, &positions, anchors, agents, p + 1, &mut entities);
            }
            pm_trace.steps.push(central_record(n, est.len(), entities));
        }
        if let Some(spf) = spf.as_mut() {
            let start = Instant::now();
            let est = spf.step(&factors)?;
            spf_trace.step_seconds.push(start.elapsed().as_secs_f64());
            let mut entities = Vec::new();
            records(&est, &positions, anchors, agents, 1, &mut entities);
            spf_trace.steps.push(central_record(n, 1, entities));
        }
    }
    let mut out = Vec::new();
    if want_pm {
        out.push(pm_trace);
    }
    if want_spf {
        out.push(spf_trace);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topology_has_the_required_structure() {
        for (a, k, o) in [(4, 8, 2), (4, 16, 4), (4, 9, 9), (4, 3, 0)] {
            for time in 1..20 {
                let t = gen_scalability_topology(a, k, o, 11, time).unwrap();
                let n_agents = a + k;
                for m in 0..o {
                    let obs = t.observers(m);
                    let mas = obs.iter().filter(|&&l| l >= a).count();
                    let anc = obs.iter().filter(|&&l| l < a).count();
                    assert_eq!(mas, 2);
                    assert!((1..=2).contains(&anc));
                }
                for l in a..n_agents {
                    let anc = t.meas_agents(l).iter().filter(|&&x| x < a).count();
                    assert!((1..=2).contains(&anc));
                    assert_eq!(t.meas_set(l).iter().filter(|&&x| x >= a).count(), 2);
                    for &x in t.meas_agents(l).iter().filter(|&&x| x >= a) {
                        assert!(t.meas_agents(x).contains(&l), "mobile agent measurements are symmetric");
                    }
                }
                // The mobile agent / object measurements form one cycle through all of them.
                let mut seen = vec![false; n_agents + o];
                let mut prev = usize::MAX;
                let mut cur = a;
                for _ in 0..k + o {
                    assert!(!seen[cur]);
                    seen[cur] = true;
                    let nbrs: Vec<usize> = if cur < n_agents {
                        t.meas_set(cur).iter().copied().filter(|&x| x >= a).collect()
                    } else {
                        t.observers(cur - n_agents).iter().copied().filter(|&x| x >= a).collect()
                    };
                    let step = if nbrs[0] != prev { nbrs[0] } else { nbrs[1] };
                    prev = cur;
                    cur = step;
                }
                assert_eq!(cur, a, "cycle closes");
                assert!(seen[a..].iter().all(|&s| s));
            }
        }
    }

    #[test]
    fn topology_is_reproducible() {
        let a = gen_scalability_topology(4, 16, 4, 3, 5).unwrap();
        let b = gen_scalability_topology(4, 16, 4, 3, 5).unwrap();
        for l in 0..20 {
            assert_eq!(a.meas_set(l), b.meas_set(l));
        }
    }
}
