//! Mobile agents and moving objects in a small field.
//!
//! Mobile agents stay put until their own belief is localized, then head for
//! the center. Because movement depends on the estimator, the ground truth is
//! produced while running PM; RM replays the recorded truth and measurements,
//! with each agent starting to move at the recorded time.

use std::time::Instant;

use crate::error::Result;
use crate::model::MotionModel;
use crate::netsim::{
    AgentSetup, AlgorithmConfig, Method, NetworkSim, ObjectPrior, OnsetRule, OnsetTrigger, PriorBox,
};
use crate::particles::ParticleSet;
use crate::rng::{run_seed, Purpose, RngStream, StreamKey};
use crate::scalar::Real;
use crate::topology::{build_topology, TopologySnapshot};

use super::common::{measure, step_record, uniform_prior, DegenerateBudget};
use super::config::{DynamicParams, MethodName, ScenarioConfig, ScenarioKind};
use super::metrics::RunTrace;
use crate::error::Error;

/// Ground truth and sensor data of one run, as generated during the PM run.
#[derive(Clone, Debug)]
pub struct DynamicWorld<T> {
    pub anchors: usize,
    pub n_agents: usize,
    pub n_objects: usize,
    /// `[n - 1][entity]` true positions.
    pub positions: Vec<Vec<[T; 2]>>,
    pub topologies: Vec<TopologySnapshot>,
    pub measurements: Vec<Vec<Vec<(usize, T)>>>,
    /// Step after which each agent started moving.
    pub onset: Vec<Option<usize>>,
}

pub(crate) fn algorithm_config<T: Real>(cfg: &ScenarioConfig, method: Method, object_motion: MotionModel<T>) -> AlgorithmConfig<T> {
    let a = &cfg.algorithm;
    AlgorithmConfig {
        method,
        particles: a.particles,
        iterations: a.iterations,
        consensus_iterations: a.consensus_iterations,
        diameter: a.diameter,
        sigma_v2: T::lit(cfg.model.sigma_v2),
        ldt: a.ldt,
        proposal: a.proposal,
        diffuse_variance: T::lit(a.diffuse_variance),
        partner_variance_cap: T::lit(a.partner_variance_cap),
        localization_threshold: T::lit(a.localization_threshold),
        object_motion,
        audit: a.audit,
    }
}

fn params(cfg: &ScenarioConfig) -> Result<&DynamicParams> {
    match cfg.kind()? {
        ScenarioKind::Dynamic(d) => Ok(d),
        _ => Err(Error::Config("not a dynamic scenario".into())),
    }
}

fn pair<T: Real>(v: [f64; 2]) -> [T; 2] {
    [T::lit(v[0]), T::lit(v[1])]
}

fn prior_box<T: Real>(bounds: [f64; 2]) -> PriorBox<T> {
    PriorBox { lo: [T::lit(bounds[0]); 2], hi: [T::lit(bounds[1]); 2] }
}

/// Priors of all agents and objects. Identical for every method of a run.
fn priors<T: Real>(
    cfg: &ScenarioConfig,
    d: &DynamicParams,
    seed: u64,
    trigger: impl Fn(usize) -> OnsetTrigger,
) -> (Vec<AgentSetup<T>>, Vec<ObjectPrior<T>>) {
    let j = cfg.algorithm.particles;
    let n_anchors = d.anchors.len();
    let n_agents = n_anchors + d.mobile_agents.len();
    let mut agents = Vec::with_capacity(n_agents);
    for a in &d.anchors {
        agents.push(AgentSetup {
            anchor: true,
            belief: ParticleSet::point_mass(&pair::<T>(*a)),
            motion: MotionModel::static_model(2),
            prior_box: None,
            onset: None,
        });
    }
    for l in n_anchors..n_agents {
        let mut rng = RngStream::new(seed, StreamKey::new(l, 0, 0, Purpose::Prior));
        agents.push(AgentSetup {
            anchor: false,
            belief: uniform_prior(j, d.prior_bounds, Some(([T::zero(); 2], T::zero())), &mut rng),
            motion: MotionModel::parked(T::lit(cfg.model.parked_sigma_u2)),
            prior_box: Some(prior_box(d.prior_bounds)),
            onset: Some(OnsetRule {
                center: pair(d.center),
                horizon: T::lit(d.horizon),
                velocity_variance: T::lit(d.onset_velocity_variance),
                motion: MotionModel::constant_velocity(T::lit(cfg.model.agent_sigma_u2)),
                trigger: trigger(l),
            }),
        });
    }
    let c = T::lit(d.velocity_prior_variance);
    let objects = d
        .objects
        .iter()
        .enumerate()
        .map(|(m, o)| {
            let entity = n_agents + m;
            let mut hyper = RngStream::new(seed, StreamKey::new(entity, 0, 0, Purpose::Hyperprior));
            let mean = [
                T::lit(o.velocity[0]) + c.sqrt() * T::standard_normal(&mut hyper),
                T::lit(o.velocity[1]) + c.sqrt() * T::standard_normal(&mut hyper),
            ];
            let mut rng = RngStream::new(seed, StreamKey::new(entity, 0, 0, Purpose::Prior));
            ObjectPrior { belief: uniform_prior(j, d.prior_bounds, Some((mean, c)), &mut rng), prior_box: Some(prior_box(d.prior_bounds)) }
        })
        .collect();
    (agents, objects)
}

fn ranges<T: Real>(d: &DynamicParams) -> Vec<T> {
    let mut r = vec![T::lit(d.agent_range); d.anchors.len() + d.mobile_agents.len()];
    for &c in &d.corner_agents {
        r[d.anchors.len() + c] = T::lit(d.corner_range);
    }
    r
}

/// Runs PM while generating the ground truth.
pub fn run_dynamic_pm<T: Real>(cfg: &ScenarioConfig, run: usize) -> Result<(RunTrace, DynamicWorld<T>)> {
    let d = params(cfg)?;
    let seed = run_seed(cfg.seed, run);
    let n_anchors = d.anchors.len();
    let n_agents = n_anchors + d.mobile_agents.len();
    let n_objects = d.objects.len();
    let object_motion = MotionModel::constant_velocity(T::lit(cfg.model.object_sigma_u2));
    let agent_motion = MotionModel::constant_velocity(T::lit(cfg.model.agent_sigma_u2));
    let (agents, objects) = priors::<T>(cfg, d, seed, |_| OnsetTrigger::Localized);
    let mut sim = NetworkSim::new(algorithm_config(cfg, Method::Pm, object_motion.clone()), seed, agents, &objects)?;

    // Full states: anchors 2-D, mobile agents and objects 4-D.
    let mut state: Vec<Vec<T>> = d.anchors.iter().map(|a| pair::<T>(*a).to_vec()).collect();
    state.extend(d.mobile_agents.iter().map(|p| vec![T::lit(p[0]), T::lit(p[1]), T::zero(), T::zero()]));
    state.extend(d.objects.iter().map(|o| {
        vec![T::lit(o.position[0]), T::lit(o.position[1]), T::lit(o.velocity[0]), T::lit(o.velocity[1])]
    }));
    let center = pair::<T>(d.center);
    let horizon = T::lit(d.horizon);
    let ranges = ranges::<T>(d);

    let mut world = DynamicWorld {
        anchors: n_anchors,
        n_agents,
        n_objects,
        positions: Vec::new(),
        topologies: Vec::new(),
        measurements: Vec::new(),
        onset: vec![None; n_agents],
    };
    let mut trace = RunTrace::new(MethodName::Pm, run, None);
    let mut budget = DegenerateBudget::default();
    let mut next = vec![T::zero(); 4];
    for n in 1..=d.steps {
        for l in n_anchors..n_agents {
            let Some(n0) = sim.nodes()[l].localized_at() else { continue };
            if n == n0 + 1 {
                world.onset[l] = Some(n0);
                let s = &mut state[l];
                s[2] = (center[0] - s[0]) / horizon;
                s[3] = (center[1] - s[1]) / horizon;
            }
            let mut rng = RngStream::new(seed, StreamKey::new(l, n, 0, Purpose::TruthMotion));
            agent_motion.sample_into(&state[l], &mut next, &mut rng);
            state[l].copy_from_slice(&next);
        }
        for m in 0..n_objects {
            let k = n_agents + m;
            let mut rng = RngStream::new(seed, StreamKey::new(k, n, 0, Purpose::TruthMotion));
            object_motion.sample_into(&state[k], &mut next, &mut rng);
            state[k].copy_from_slice(&next);
        }
        let positions: Vec<[T; 2]> = state.iter().map(|s| [s[0], s[1]]).collect();
        let topo = build_topology(&positions, n_agents, T::lit(d.comm_range), &ranges)?;
        let meas = measure(&positions, &topo, T::lit(cfg.model.sigma_v2), seed, n);
        let start = Instant::now();
        let report = sim.run_time_step(&topo, &meas)?;
        trace.step_seconds.push(start.elapsed().as_secs_f64());
        trace.steps.push(step_record(&report, &positions, n_agents, n_anchors));
        world.positions.push(positions);
        world.topologies.push(topo);
        world.measurements.push(meas);
        if budget.exhausted_after(report.degenerate) {
            trace.aborted = true;
            break;
        }
    }
    Ok((trace, world))
}

/// Runs RM on a recorded world.
pub fn run_dynamic_rm<T: Real>(cfg: &ScenarioConfig, run: usize, world: &DynamicWorld<T>) -> Result<RunTrace> {
    let d = params(cfg)?;
    let seed = run_seed(cfg.seed, run);
    let object_motion = MotionModel::constant_velocity(T::lit(cfg.model.object_sigma_u2));
    let (agents, objects) = priors::<T>(cfg, d, seed, |l| match world.onset[l] {
        Some(n0) => OnsetTrigger::At(n0),
        None => OnsetTrigger::Never,
    });
    let mut sim = NetworkSim::new(algorithm_config(cfg, Method::Rm, object_motion), seed, agents, &objects)?;
    let mut trace = RunTrace::new(MethodName::Rm, run, None);
    let mut budget = DegenerateBudget::default();
    for ((positions, topo), meas) in world.positions.iter().zip(&world.topologies).zip(&world.measurements) {
        let start = Instant::now();
        let report = sim.run_time_step(topo, meas)?;
        trace.step_seconds.push(start.elapsed().as_secs_f64());
        trace.steps.push(step_record(&report, positions, world.n_agents, world.anchors));
        if budget.exhausted_after(report.degenerate) {
            trace.aborted = true;
            break;
        }
    }
    Ok(trace)
}

/// All requested methods for one run.
pub fn run_dynamic<T: Real>(cfg: &ScenarioConfig, run: usize) -> Result<Vec<RunTrace>> {
    let (pm, world) = run_dynamic_pm::<T>(cfg, run)?;
    let mut out = Vec::new();
    if cfg.runs_method(MethodName::Pm) {
        out.push(pm);
    }
    if cfg.runs_method(MethodName::Rm) {
        out.push(run_dynamic_rm(cfg, run, &world)?);
    }
    Ok(out)
}
