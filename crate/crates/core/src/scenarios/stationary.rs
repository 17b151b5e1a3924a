//! A single time step with static agents and objects placed at random.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::MotionModel;
use crate::netsim::{AgentSetup, Method, NetworkSim, ObjectPrior, PriorBox};
use crate::particles::ParticleSet;
use crate::rng::{run_seed, Purpose, RngStream, StreamKey};
use crate::scalar::Real;
use crate::topology::{build_topology, TopologySnapshot};

use super::common::{measure, step_record, uniform_prior};
use super::config::{MethodName, ScenarioConfig, ScenarioKind, StaticParams};
use super::dynamic::algorithm_config;
use super::metrics::RunTrace;

#[derive(Clone, Debug)]
pub struct Placement<T> {
    pub anchors: usize,
    pub n_agents: usize,
    /// Agents first, then objects.
    pub positions: Vec<[T; 2]>,
    pub topology: TopologySnapshot,
    pub measurements: Vec<Vec<(usize, T)>>,
    /// Placements rejected before this one.
    pub redraws: usize,
}

fn params(cfg: &ScenarioConfig) -> Result<&StaticParams> {
    match cfg.kind()? {
        ScenarioKind::Static(s) => Ok(s),
        _ => Err(Error::Config("not a static scenario".into())),
    }
}

/// Uniform placement, redrawn while the communication graph is disconnected
/// or wider than the configured number of max-consensus rounds.
pub fn gen_static<T: Real>(cfg: &ScenarioConfig, run: usize) -> Result<Placement<T>> {
    let s = params(cfg)?;
    let seed = run_seed(cfg.seed, run);
    let anchors = s.anchors.len();
    let n_agents = anchors + s.agents;
    let ranges = vec![T::lit(s.measurement_range); n_agents];
    for attempt in 0..=s.max_redraws {
        let mut positions: Vec<[T; 2]> = s.anchors.iter().map(|a| [T::lit(a[0]), T::lit(a[1])]).collect();
        for k in anchors..n_agents + s.objects {
            let mut rng = RngStream::new(seed, StreamKey::new(k, 0, attempt, Purpose::Placement));
            positions.push([
                T::lit(s.field[0]) * T::unit_uniform(&mut rng),
                T::lit(s.field[1]) * T::unit_uniform(&mut rng),
            ]);
        }
        let topology = match build_topology(&positions, n_agents, T::lit(s.comm_range), &ranges) {
            Ok(t) => t,
            Err(Error::CommGraphDisconnected) => continue,
            Err(e) => return Err(e),
        };
        if cfg.algorithm.diameter.is_some_and(|i| topology.diameter().map_or(true, |d| d > i)) {
            continue;
        }
        let measurements = measure(&positions, &topology, T::lit(cfg.model.sigma_v2), seed, 1);
        return Ok(Placement { anchors, n_agents, positions, topology, measurements, redraws: attempt });
    }
    Err(Error::InvalidTopology(format!("no admissible placement in {} draws", s.max_redraws + 1)))
}

fn network<T: Real>(cfg: &ScenarioConfig, s: &StaticParams, p: &Placement<T>, method: Method, seed: u64) -> Result<NetworkSim<T>> {
    let j = cfg.algorithm.particles;
    let bounds = PriorBox { lo: [T::lit(s.prior_bounds[0]); 2], hi: [T::lit(s.prior_bounds[1]); 2] };
    let agents = (0..p.n_agents)
        .map(|l| {
            if l < p.anchors {
                AgentSetup {
                    anchor: true,
                    belief: ParticleSet::point_mass(&p.positions[l]),
                    motion: MotionModel::static_model(2),
                    prior_box: None,
                    onset: None,
                }
            } else {
                let mut rng = RngStream::new(seed, StreamKey::new(l, 0, 0, Purpose::Prior));
                AgentSetup {
                    anchor: false,
                    belief: uniform_prior(j, s.prior_bounds, None, &mut rng),
                    motion: MotionModel::static_model(2),
                    prior_box: Some(bounds),
                    onset: None,
                }
            }
        })
        .collect();
    let objects: Vec<ObjectPrior<T>> = (0..s.objects)
        .map(|m| {
            let mut rng = RngStream::new(seed, StreamKey::new(p.n_agents + m, 0, 0, Purpose::Prior));
            ObjectPrior { belief: uniform_prior(j, s.prior_bounds, None, &mut rng), prior_box: Some(bounds) }
        })
        .collect();
    NetworkSim::new(algorithm_config(cfg, method, MotionModel::static_model(2)), seed, agents, &objects)
}

/// All requested methods on one placement.
pub fn run_static<T: Real>(cfg: &ScenarioConfig, run: usize) -> Result<Vec<RunTrace>> {
    let s = params(cfg)?;
    let seed = run_seed(cfg.seed, run);
    let placement = gen_static::<T>(cfg, run)?;
    let mut out = Vec::new();
    for (name, method) in [(MethodName::Pm, Method::Pm), (MethodName::Rm, Method::Rm)] {
        if !cfg.runs_method(name) {
            continue;
        }
        let mut sim = network(cfg, s, &placement, method, seed)?;
        let mut trace = RunTrace::new(name, run, None);
        let start = Instant::now();
        let report = sim.run_time_step(&placement.topology, &placement.measurements)?;
        trace.step_seconds.push(start.elapsed().as_secs_f64());
        trace.steps.push(step_record(&report, &placement.positions, placement.n_agents, placement.anchors));
        out.push(trace);
    }
    Ok(out)
}
