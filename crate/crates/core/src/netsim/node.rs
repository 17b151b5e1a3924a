//! One agent's private state and computations.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bp::{
    agent_belief_update, alt_proposal_object, attach_carrier, extrinsic_object_to_agent, mc_log_messages,
    ring_log_ratio, ring_proposal, select_lhat, Partner, PredictionDensity,
};
use crate::consensus::{average_update, max_update};
use crate::error::{Error, Result};
use crate::model::MotionModel;
use crate::particles::{component_variances, empirical_variance, message_filter, mmse_estimate, normalize, normalize_log, resample, ParticleSet};
use crate::rng::{Purpose, RngStream, StreamKey};
use crate::scalar::Real;

use super::radio::{Delivery, Payload, ProposalFrame};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Joint self-localization and tracking.
    Pm,
    /// Separate self-localization, then tracking from point estimates.
    Rm,
}

/// When particles are drawn around the most informative partner instead of
/// from the prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalPolicy {
    Never,
    /// At `n = 1` only.
    FirstStep,
    /// While the prediction's largest component variance exceeds the diffuse threshold.
    WhileDiffuse,
    Always,
}

/// Axis-aligned box of a uniform position prior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorBox<T> {
    pub lo: [T; 2],
    pub hi: [T; 2],
}

/// When a mobile agent starts moving. `At(n)` and `Localized` both start
/// the motion at the step after `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OnsetTrigger {
    /// The first step at which the agent's own belief is localized.
    Localized,
    At(usize),
    Never,
}

/// Mobile agents that start moving at some point: velocities are drawn
/// around `(center - estimate) / horizon` and the motion model is replaced.
#[derive(Clone, Debug, PartialEq)]
pub struct OnsetRule<T> {
    pub center: [T; 2],
    pub horizon: T,
    pub velocity_variance: T,
    pub motion: MotionModel<T>,
    pub trigger: OnsetTrigger,
}

/// Parameters shared by every agent.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgorithmConfig<T> {
    pub method: Method,
    /// `J`.
    pub particles: usize,
    /// `P`.
    pub iterations: usize,
    /// `C`.
    pub consensus_iterations: usize,
    /// `I`; the per-step graph diameter when `None`.
    pub diameter: Option<usize>,
    pub sigma_v2: T,
    pub ldt: bool,
    pub proposal: ProposalPolicy,
    pub diffuse_variance: T,
    /// Partners with larger trace variance are left out of stacked products.
    pub partner_variance_cap: T,
    /// Largest component variance at which an agent counts as localized.
    pub localization_threshold: T,
    pub object_motion: MotionModel<T>,
    pub audit: bool,
}

/// Initial state of one agent.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentSetup<T> {
    pub anchor: bool,
    pub belief: ParticleSet<T>,
    pub motion: MotionModel<T>,
    pub prior_box: Option<PriorBox<T>>,
    pub onset: Option<OnsetRule<T>>,
}

/// Initial object belief, known to every agent at `n = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectPrior<T> {
    pub belief: ParticleSet<T>,
    pub prior_box: Option<PriorBox<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Track<T> {
    pub belief: ParticleSet<T>,
    pub prior_box: Option<PriorBox<T>>,
}

/// Consensus weights of one object's participants, by global agent id.
#[derive(Clone, Debug)]
pub(crate) struct Group<T> {
    pub members: Vec<usize>,
    pub rows: Arc<BTreeMap<usize, (T, Vec<(usize, T)>)>>,
    pub rounds: usize,
    pub scale: usize,
    pub alt: bool,
}

impl<T> Group<T> {
    pub fn contains(&self, l: usize) -> bool {
        self.rows.contains_key(&l)
    }
}

#[derive(Clone, Debug, Default)]
struct ObjectScratch<T> {
    proposal: Option<ParticleSet<T>>,
    zeta0: Vec<T>,
    own: Vec<T>,
    zeta: Vec<T>,
    weights: Vec<T>,
    frame: Option<ProposalFrame<T>>,
    belief: Option<ParticleSet<T>>,
}

#[derive(Clone, Debug, Default)]
struct Scratch<T> {
    time: usize,
    prediction: Option<ParticleSet<T>>,
    density: Option<PredictionDensity<T>>,
    own_box: bool,
    use_alt: bool,
    updated: bool,
    agent_meas: Vec<(usize, T)>,
    object_meas: Vec<(usize, T)>,
    neighbor_beliefs: BTreeMap<usize, Arc<ParticleSet<T>>>,
    psi_in: BTreeMap<usize, ParticleSet<T>>,
    psi_in_next: BTreeMap<usize, ParticleSet<T>>,
    psi_out: BTreeMap<usize, ParticleSet<T>>,
    current: Option<ParticleSet<T>>,
    weighted: Option<ParticleSet<T>>,
    objects: BTreeMap<usize, ObjectScratch<T>>,
    degenerate: bool,
}

/// An agent: its own belief, its copies of object beliefs and per-step scratch.
#[derive(Clone, Debug)]
pub struct AgentNode<T> {
    id: usize,
    n_agents: usize,
    anchor: bool,
    belief: ParticleSet<T>,
    motion: MotionModel<T>,
    prior_box: Option<PriorBox<T>>,
    onset: Option<OnsetRule<T>>,
    localized_at: Option<usize>,
    estimate: Vec<T>,
    objects: Vec<Option<Track<T>>>,
    scratch: Scratch<T>,
}

fn positions_of<T: Real>(ps: &ParticleSet<T>) -> ParticleSet<T> {
    if ps.dim() == 2 {
        ps.clone()
    } else {
        ps.positions()
    }
}

fn trace_variance<T: Real>(ps: &ParticleSet<T>) -> T {
    if ps.is_point_mass() {
        T::zero()
    } else {
        empirical_variance(ps)
    }
}

fn max_component_variance<T: Real>(ps: &ParticleSet<T>) -> T {
    let v = component_variances(ps);
    v[0].max(v[1])
}

/// Gaussian kernel bandwidth for a prediction: motion noise plus a
/// rule-of-thumb term that shrinks with `J`.
fn kernel_density<T: Real>(prediction: &ParticleSet<T>, motion_var: T) -> PredictionDensity<T> {
    let v = component_variances(prediction);
    let spread = (v[0] + v[1]) / T::lit(2.0);
    let j = T::from_usize_lossy(prediction.len());
    let h2 = motion_var + spread * j.powf(T::lit(-1.0 / 3.0));
    PredictionDensity::kernel(prediction, h2.max(T::lit(1e-6)))
}

/// Keeps the frame with the smaller `(variance, owner)`.
fn min_update_frame<T: Real>(own: &mut Option<ProposalFrame<T>>, other: Option<ProposalFrame<T>>) {
    let Some(o) = other else { return };
    let better = match own {
        None => true,
        Some(c) => match o.variance.partial_cmp(&c.variance) {
            Some(std::cmp::Ordering::Less) => true,
            Some(std::cmp::Ordering::Equal) => o.owner < c.owner,
            _ => false,
        },
    };
    if better {
        *own = Some(o);
    }
}

pub(crate) fn uses_alt<T: Real>(policy: ProposalPolicy, time: usize, prediction: &ParticleSet<T>, diffuse: T) -> bool {
    match policy {
        ProposalPolicy::Never => false,
        ProposalPolicy::FirstStep => time == 1,
        ProposalPolicy::Always => true,
        ProposalPolicy::WhileDiffuse => !prediction.is_point_mass() && max_component_variance(prediction) > diffuse,
    }
}

fn density_for<T: Real>(
    prior_box: Option<PriorBox<T>>,
    prediction: &ParticleSet<T>,
    motion_var: T,
) -> PredictionDensity<T> {
    match prior_box {
        Some(b) => PredictionDensity::Box { lo: b.lo, hi: b.hi },
        None => kernel_density(prediction, motion_var),
    }
}

impl<T: Real> AgentNode<T> {
    pub fn new(id: usize, n_agents: usize, setup: AgentSetup<T>, objects: &[ObjectPrior<T>]) -> Self {
        let estimate = mmse_estimate(&setup.belief);
        Self {
            id,
            n_agents,
            anchor: setup.anchor,
            belief: setup.belief,
            motion: setup.motion,
            prior_box: setup.prior_box,
            onset: setup.onset,
            localized_at: if setup.anchor { Some(0) } else { None },
            estimate,
            objects: objects.iter().map(|o| Some(Track { belief: o.belief.clone(), prior_box: o.prior_box })).collect(),
            scratch: Scratch::default(),
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn is_anchor(&self) -> bool {
        self.anchor
    }

    pub fn belief(&self) -> &ParticleSet<T> {
        &self.belief
    }

    pub fn estimate(&self) -> &[T] {
        &self.estimate
    }

    pub fn localized_at(&self) -> Option<usize> {
        self.localized_at
    }

    pub fn holds(&self, m: usize) -> bool {
        self.objects[m].is_some()
    }

    pub fn object_belief(&self, m: usize) -> Option<&ParticleSet<T>> {
        self.objects[m].as_ref().map(|t| &t.belief)
    }

    pub fn degenerate(&self) -> bool {
        self.scratch.degenerate
    }

    fn key(&self, entity: usize, iteration: usize, purpose: Purpose) -> StreamKey {
        StreamKey::new(entity, self.scratch.time, iteration, purpose)
    }

    /// Step 1: predictions of the own state and of every held object.
    pub(crate) fn begin_step(
        &mut self,
        time: usize,
        measurements: &[(usize, T)],
        cfg: &AlgorithmConfig<T>,
        seed: u64,
    ) -> Result<()> {
        let mut scratch = Scratch { time, ..Scratch::default() };
        for &(k, y) in measurements {
            if k < self.n_agents {
                scratch.agent_meas.push((k, y));
            } else {
                scratch.object_meas.push((k - self.n_agents, y));
            }
        }
        scratch.agent_meas.sort_by_key(|m| m.0);
        scratch.object_meas.sort_by_key(|m| m.0);
        self.scratch = scratch;

        if let Some(rule) = self.onset.clone() {
            let n0 = match rule.trigger {
                OnsetTrigger::Localized => self.localized_at,
                OnsetTrigger::At(n) => Some(n),
                OnsetTrigger::Never => None,
            };
            if n0.is_some_and(|n0| n0 + 1 == time) && !self.anchor {
                self.start_moving(&rule, seed)?;
            }
        }

        let prediction = if self.anchor {
            self.belief.clone()
        } else {
            let mut rng = RngStream::new(seed, self.key(self.id, 0, Purpose::Prediction));
            message_filter(&self.belief, &self.motion, &mut rng)?
        };
        self.scratch.own_box = self.prior_box.is_some();
        self.scratch.use_alt =
            !self.anchor && uses_alt(cfg.proposal, time, &prediction, cfg.diffuse_variance);
        if self.scratch.use_alt {
            self.scratch.density = Some(density_for(self.prior_box, &prediction, self.motion.position_noise_variance()));
        }
        self.scratch.current = Some(prediction.clone());
        self.scratch.prediction = Some(prediction);

        for m in 0..self.objects.len() {
            if let Some(track) = &self.objects[m] {
                let entity = self.n_agents + m;
                let mut rng = RngStream::new(seed, self.key(entity, 0, Purpose::Prediction));
                let pred = message_filter(&track.belief, &cfg.object_motion, &mut rng)?;
                self.scratch.objects.insert(m, ObjectScratch { proposal: Some(pred), ..ObjectScratch::default() });
            }
        }
        // ψ^(0)_{m→l} is the object prediction; ψ^(0)_{l→m} the own prediction.
        for &(m, _) in &self.scratch.object_meas.clone() {
            if let Some(os) = self.scratch.objects.get(&m) {
                let p = os.proposal.clone().expect("prediction present");
                self.scratch.psi_in.insert(m, p);
            }
            let own = positions_of(self.scratch.prediction.as_ref().expect("prediction"));
            self.scratch.psi_out.insert(m, own);
        }
        Ok(())
    }

    fn start_moving(&mut self, rule: &OnsetRule<T>, seed: u64) -> Result<()> {
        if self.belief.dim() != 4 {
            return Err(Error::DimensionMismatch { expected: 4, got: self.belief.dim() });
        }
        let mean = [
            (rule.center[0] - self.estimate[0]) / rule.horizon,
            (rule.center[1] - self.estimate[1]) / rule.horizon,
        ];
        let sd = rule.velocity_variance.sqrt();
        let mut rng = RngStream::new(seed, self.key(self.id, 0, Purpose::Hyperprior));
        let mut states = self.belief.states().to_vec();
        for s in states.chunks_exact_mut(4) {
            s[2] = mean[0] + sd * T::standard_normal(&mut rng);
            s[3] = mean[1] + sd * T::standard_normal(&mut rng);
        }
        self.belief = ParticleSet::new(4, states, self.belief.weights().to_vec())?;
        self.motion = rule.motion.clone();
        Ok(())
    }

    /// Equally weighted positions of the current own belief, for broadcast.
    pub(crate) fn belief_payload(&self) -> Arc<ParticleSet<T>> {
        Arc::new(positions_of(self.scratch.current.as_ref().expect("step started")))
    }

    /// Stores neighbour beliefs received this iteration; keeps measured partners only.
    pub(crate) fn receive_beliefs(&mut self, deliveries: Vec<Delivery<T>>) {
        self.scratch.neighbor_beliefs.clear();
        for d in deliveries {
            if let Payload::Belief(b) = d.payload {
                if self.scratch.agent_meas.iter().any(|&(k, _)| k == d.from) {
                    self.scratch.neighbor_beliefs.insert(d.from, b);
                }
            }
        }
    }

    fn partner_sets(&self, cfg: &AlgorithmConfig<T>, exclude: Option<usize>) -> Vec<(usize, &ParticleSet<T>, T)> {
        let s = &self.scratch;
        let mut out = Vec::new();
        for &(k, y) in &s.agent_meas {
            if let Some(b) = s.neighbor_beliefs.get(&k) {
                out.push((k, b.as_ref(), y));
            }
        }
        if cfg.method == Method::Pm {
            for &(m, y) in &s.object_meas {
                if Some(m) == exclude {
                    continue;
                }
                if let Some(psi) = s.psi_in.get(&m) {
                    out.push((self.n_agents + m, psi, y));
                }
            }
        }
        out
    }

    /// Weighted own belief from the current inputs, leaving out object `exclude`.
    fn weighted_belief(
        &self,
        cfg: &AlgorithmConfig<T>,
        exclude: Option<usize>,
        rng: &mut impl Rng,
    ) -> Result<(ParticleSet<T>, bool)> {
        let prediction = self.scratch.prediction.as_ref().expect("step started");
        if self.anchor {
            return Ok((prediction.clone(), false));
        }
        let sets = self.partner_sets(cfg, exclude);
        let usable: Vec<Partner<'_, T>> = sets
            .iter()
            .filter(|(_, ps, _)| trace_variance(ps) <= cfg.partner_variance_cap)
            .map(|&(_, ps, y)| Partner::new(ps, y))
            .collect();
        if self.scratch.use_alt && !sets.is_empty() {
            let candidates: Vec<(usize, T)> = sets.iter().map(|(k, ps, _)| (*k, trace_variance(ps))).collect();
            let lhat = select_lhat(&candidates)?;
            let (_, lps, ly) = sets.iter().find(|(k, _, _)| *k == lhat).expect("candidate present");
            let others: Vec<Partner<'_, T>> = sets
                .iter()
                .filter(|(k, ps, _)| *k != lhat && trace_variance(ps) <= cfg.partner_variance_cap)
                .map(|&(_, ps, y)| Partner::new(ps, y))
                .collect();
            let density = self.scratch.density.as_ref().expect("density built with the proposal flag");
            let out = alt_proposal_object(
                Partner::new(lps, *ly),
                &others,
                Some(prediction),
                density,
                cfg.sigma_v2,
                cfg.particles,
                rng,
            )?;
            return Ok((out, true));
        }
        let updated = !usable.is_empty();
        Ok((agent_belief_update(prediction, &usable, cfg.sigma_v2)?, updated))
    }

    /// Own belief at iteration `p`, resampled for the next broadcast.
    /// Returns the weighted belief's estimate.
    pub(crate) fn update_own(&mut self, p: usize, cfg: &AlgorithmConfig<T>, seed: u64) -> Result<Vec<T>> {
        if self.anchor {
            let est = self.belief.particle(0).to_vec();
            self.scratch.weighted = Some(self.belief.clone());
            return Ok(est);
        }
        let mut rng = RngStream::new(seed, self.key(self.id, p, Purpose::AltProposal));
        let (weighted, updated) = match self.weighted_belief(cfg, None, &mut rng) {
            Ok(v) => v,
            Err(Error::DegenerateWeights) => {
                self.scratch.degenerate = true;
                (self.scratch.prediction.clone().expect("prediction"), false)
            }
            Err(e) => return Err(e),
        };
        self.scratch.updated |= updated;
        let est = mmse_estimate(&weighted);
        let mut rng = RngStream::new(seed, self.key(self.id, p, Purpose::Resample));
        self.scratch.current = Some(resample(&weighted, &mut rng)?);
        self.scratch.weighted = Some(weighted);
        Ok(est)
    }

    /// ψ^(p)_{l→m} for every measured object, from the same inputs as the own belief.
    pub(crate) fn update_outgoing(&mut self, p: usize, cfg: &AlgorithmConfig<T>, seed: u64) -> Result<()> {
        if self.anchor {
            return Ok(());
        }
        let mut next = BTreeMap::new();
        for &(m, _) in &self.scratch.object_meas {
            let entity = self.n_agents + m;
            let mut rng = RngStream::new(seed, self.key(self.id, p, Purpose::ExtrinsicResample).with_peer(entity));
            let weighted = match self.weighted_belief(cfg, Some(m), &mut rng) {
                Ok((w, _)) => w,
                Err(Error::DegenerateWeights) => {
                    self.scratch.degenerate = true;
                    self.scratch.prediction.clone().expect("prediction")
                }
                Err(e) => return Err(e),
            };
            next.insert(m, positions_of(&resample(&weighted, &mut rng)?));
        }
        self.scratch.psi_out = next;
        Ok(())
    }

    fn object_measurement(&self, m: usize) -> Option<T> {
        self.scratch.object_meas.iter().find(|&&(k, _)| k == m).map(|&(_, y)| y)
    }

    /// The particles this agent offers as the source of object `m`'s message,
    /// or `None` if it cannot be a candidate.
    fn message_source(&self, m: usize, cfg: &AlgorithmConfig<T>) -> Option<ParticleSet<T>> {
        self.object_measurement(m)?;
        match cfg.method {
            Method::Pm => self.scratch.psi_out.get(&m).cloned(),
            Method::Rm => {
                let w = self.scratch.weighted.as_ref()?;
                if self.anchor || max_component_variance(w) < cfg.localization_threshold {
                    Some(ParticleSet::point_mass(&mmse_estimate(w)[..2]))
                } else {
                    None
                }
            }
        }
    }

    /// Initial min-consensus frames for the objects in `groups` that use the proposal.
    pub(crate) fn init_frames(&mut self, groups: &[Group<T>], cfg: &AlgorithmConfig<T>) {
        for (m, g) in groups.iter().enumerate() {
            if !g.alt || !g.contains(self.id) {
                continue;
            }
            let frame = self.message_source(m, cfg).map(|ps| ProposalFrame {
                variance: trace_variance(&ps),
                owner: self.id,
                measurement: self.object_measurement(m).expect("observer"),
                particles: Arc::new(ps),
            });
            if let Some(os) = self.scratch.objects.get_mut(&m) {
                os.frame = frame;
            }
        }
    }

    /// Objects for which this agent still sends in round `round`, with the given payload builder.
    fn active<'a>(&self, groups: &'a [Group<T>], round: usize, rounds: impl Fn(&Group<T>) -> usize, alt_only: bool) -> Vec<usize> {
        groups
            .iter()
            .enumerate()
            .filter(|(_, g)| g.contains(self.id) && round < rounds(g) && (!alt_only || g.alt))
            .map(|(m, _)| m)
            .collect()
    }

    pub(crate) fn frame_payload(&self, groups: &[Group<T>], round: usize) -> Option<(Payload<T>, usize)> {
        let objs = self.active(groups, round, |g| g.rounds, true);
        if objs.is_empty() {
            return None;
        }
        let frames = objs.iter().map(|&m| (m, self.scratch.objects[&m].frame.clone())).collect();
        Some((Payload::Proposals(frames), objs.len()))
    }

    pub(crate) fn receive_frames(&mut self, deliveries: Vec<Delivery<T>>, groups: &[Group<T>], round: usize) {
        let objs = self.active(groups, round, |g| g.rounds, true);
        for d in deliveries {
            if let Payload::Proposals(frames) = d.payload {
                for (m, f) in frames {
                    if !objs.contains(&m) || !groups[m].contains(d.from) {
                        continue;
                    }
                    let os = self.scratch.objects.get_mut(&m).expect("member holds object");
                    min_update_frame(&mut os.frame, f);
                }
            }
        }
    }

    /// Proposal particles and consensus initial values for every member object.
    pub(crate) fn init_consensus(&mut self, p: usize, groups: &[Group<T>], cfg: &AlgorithmConfig<T>, seed: u64) -> Result<()> {
        for (m, g) in groups.iter().enumerate() {
            if !g.contains(self.id) {
                continue;
            }
            let entity = self.n_agents + m;
            let pred = self.scratch.objects[&m].proposal.clone().expect("prediction");
            let frame = if g.alt { self.scratch.objects[&m].frame.clone() } else { None };
            let (proposal, zeta0, own) = match frame {
                Some(f) => {
                    let mut rng = RngStream::new(seed, self.key(entity, p, Purpose::AltProposal));
                    let pos = ring_proposal(&f.particles, f.measurement, cfg.sigma_v2, cfg.particles, &mut rng);
                    let proposal = attach_carrier(pos, Some(&pred), cfg.particles)?;
                    let (zeta0, own) = if f.owner == self.id {
                        let (log_phi, ratio) = ring_log_ratio(&proposal, &f.particles, f.measurement, cfg.sigma_v2);
                        let density = density_for(
                            self.objects[m].as_ref().and_then(|t| t.prior_box),
                            &pred,
                            cfg.object_motion.position_noise_variance(),
                        );
                        let z = (0..proposal.len()).map(|j| ratio[j] + density.log_eval(proposal.particle(j))).collect();
                        (z, log_phi)
                    } else {
                        let z = self.observer_values(m, &proposal, cfg);
                        (z.clone(), z)
                    };
                    (proposal, zeta0, own)
                }
                None => {
                    let z = self.observer_values(m, &pred, cfg);
                    // Keep the prediction's particles but drop any weighting.
                    let proposal = ParticleSet::uniform(pred.dim(), pred.states().to_vec())?;
                    (proposal, z.clone(), z)
                }
            };
            let os = self.scratch.objects.get_mut(&m).expect("member holds object");
            os.proposal = Some(proposal);
            os.zeta = zeta0.clone();
            os.zeta0 = zeta0;
            os.own = own;
        }
        Ok(())
    }

    /// `log φ_{l→m}` at the proposal particles, or zeros for non-observers.
    fn observer_values(&self, m: usize, proposal: &ParticleSet<T>, cfg: &AlgorithmConfig<T>) -> Vec<T> {
        match (self.object_measurement(m), self.message_source(m, cfg)) {
            (Some(y), Some(src)) => mc_log_messages(proposal, &src, y, cfg.sigma_v2),
            _ => vec![T::zero(); proposal.len()],
        }
    }

    pub(crate) fn values_payload(&self, groups: &[Group<T>], round: usize, rounds: impl Fn(&Group<T>) -> usize, use_weights: bool) -> Option<(Payload<T>, usize)> {
        let objs = self.active(groups, round, rounds, false);
        if objs.is_empty() {
            return None;
        }
        let count = objs.len();
        let vals = objs
            .iter()
            .map(|&m| {
                let os = &self.scratch.objects[&m];
                (m, Arc::new(if use_weights { os.weights.clone() } else { os.zeta.clone() }))
            })
            .collect();
        Some((Payload::Values(vals), count))
    }

    fn neighbor_values(deliveries: &[Delivery<T>], m: usize) -> BTreeMap<usize, Arc<Vec<T>>> {
        let mut out = BTreeMap::new();
        for d in deliveries {
            if let Payload::Values(v) = &d.payload {
                for (k, vals) in v {
                    if *k == m {
                        out.insert(d.from, vals.clone());
                    }
                }
            }
        }
        out
    }

    pub(crate) fn average_round(&mut self, deliveries: Vec<Delivery<T>>, groups: &[Group<T>], round: usize, total: usize) -> Result<()> {
        let objs = self.active(groups, round, |_| total, false);
        for m in objs {
            let received = Self::neighbor_values(&deliveries, m);
            let (self_w, row) = &groups[m].rows[&self.id];
            let mut nb: Vec<(T, &[T])> = Vec::with_capacity(row.len());
            for (k, w) in row {
                let v = received.get(k).ok_or_else(|| Error::InvalidTopology(format!("missing consensus value from {k}")))?;
                nb.push((*w, v.as_slice()));
            }
            let os = self.scratch.objects.get_mut(&m).expect("member");
            let mut out = vec![T::zero(); os.zeta.len()];
            average_update(*self_w, &os.zeta, &nb, &mut out);
            os.zeta = out;
        }
        Ok(())
    }

    /// Scales the averaged states and normalizes them into weights before maximization.
    pub(crate) fn prepare_max(&mut self, groups: &[Group<T>]) -> Result<()> {
        for (m, g) in groups.iter().enumerate() {
            if !g.contains(self.id) {
                continue;
            }
            let a = T::from_usize_lossy(g.scale);
            let os = self.scratch.objects.get_mut(&m).expect("member");
            let logp: Vec<T> = os.zeta.iter().map(|&v| a * v).collect();
            os.weights = match normalize_log(&logp) {
                Ok(w) => w,
                Err(Error::DegenerateWeights) => {
                    self.scratch.degenerate = true;
                    vec![T::one() / T::from_usize_lossy(logp.len()); logp.len()]
                }
                Err(e) => return Err(e),
            };
        }
        Ok(())
    }

    pub(crate) fn max_round(&mut self, deliveries: Vec<Delivery<T>>, groups: &[Group<T>], round: usize) {
        let objs = self.active(groups, round, |g| g.rounds, false);
        for m in objs {
            let received = Self::neighbor_values(&deliveries, m);
            let os = self.scratch.objects.get_mut(&m).expect("member");
            for (k, v) in received {
                if groups[m].contains(k) {
                    max_update(&mut os.weights, &v);
                }
            }
        }
    }

    /// Object beliefs at iteration `p` and, unless `last`, ψ^(p)_{m→l}.
    /// Returns the object estimates of member objects.
    pub(crate) fn finish_objects(
        &mut self,
        p: usize,
        last: bool,
        groups: &[Group<T>],
        cfg: &AlgorithmConfig<T>,
        seed: u64,
    ) -> Result<BTreeMap<usize, Vec<T>>> {
        let mut estimates = BTreeMap::new();
        for (m, g) in groups.iter().enumerate() {
            if !g.contains(self.id) {
                continue;
            }
            let entity = self.n_agents + m;
            let os = self.scratch.objects.get_mut(&m).expect("member");
            let proposal = os.proposal.as_ref().expect("proposal");
            let weights = normalize(&os.weights)?;
            let belief = ParticleSet::new(proposal.dim(), proposal.states().to_vec(), weights)?;
            estimates.insert(m, mmse_estimate(&belief));
            os.belief = Some(belief);
            if !last && cfg.method == Method::Pm && self.object_measurement(m).is_some() {
                let mut rng = RngStream::new(seed, self.key(entity, p, Purpose::ExtrinsicResample).with_peer(self.id));
                let os = &self.scratch.objects[&m];
                let psi = extrinsic_object_to_agent(os.proposal.as_ref().expect("proposal"), &os.zeta, &os.own, g.scale, &mut rng)?;
                self.scratch.psi_in_next.insert(m, psi);
            }
        }
        Ok(estimates)
    }

    /// Makes this iteration's incoming extrinsic messages current.
    pub(crate) fn rotate(&mut self) {
        let next = std::mem::take(&mut self.scratch.psi_in_next);
        for (m, psi) in next {
            self.scratch.psi_in.insert(m, psi);
        }
    }

    /// Whether object `m` uses the alternative proposal this step.
    pub(crate) fn object_alt(&self, m: usize, cfg: &AlgorithmConfig<T>) -> bool {
        self.scratch
            .objects
            .get(&m)
            .and_then(|os| os.proposal.as_ref())
            .is_some_and(|pred| uses_alt(cfg.proposal, self.scratch.time, pred, cfg.diffuse_variance))
    }

    /// Estimate of a held object from its predicted or final belief this step.
    pub(crate) fn object_estimate(&self, m: usize) -> Option<Vec<T>> {
        let os = self.scratch.objects.get(&m)?;
        os.belief.as_ref().or(os.proposal.as_ref()).map(mmse_estimate)
    }

    /// Objects held but without participants this step coast on their prediction.
    pub(crate) fn coast_objects(&mut self, groups: &[Group<T>]) {
        for (m, g) in groups.iter().enumerate() {
            if g.contains(self.id) {
                continue;
            }
            if let Some(os) = self.scratch.objects.get_mut(&m) {
                os.belief = os.proposal.clone();
            }
        }
    }

    /// Ends the step: resamples all beliefs and updates the localization flag.
    pub(crate) fn end_step(&mut self, groups: &[Group<T>], observed: &[bool], cfg: &AlgorithmConfig<T>, seed: u64) -> Result<()> {
        let time = self.scratch.time;
        if !self.anchor {
            let weighted = self.scratch.weighted.clone().unwrap_or_else(|| self.scratch.prediction.clone().expect("prediction"));
            self.estimate = mmse_estimate(&weighted);
            if self.localized_at.is_none() && max_component_variance(&weighted) < cfg.localization_threshold {
                self.localized_at = Some(time);
            }
            self.belief = self.scratch.current.clone().expect("resampled belief");
            if self.scratch.updated {
                self.prior_box = None;
            }
        }
        for m in 0..self.objects.len() {
            let Some(os) = self.scratch.objects.get(&m) else { continue };
            let Some(b) = os.belief.as_ref() else { continue };
            let entity = self.n_agents + m;
            let mut rng = RngStream::new(seed, self.key(entity, cfg.iterations, Purpose::Resample));
            let resampled = resample(b, &mut rng)?;
            let track = self.objects[m].as_mut().expect("held");
            track.belief = resampled;
            if groups[m].contains(self.id) && observed[m] {
                track.prior_box = None;
            }
        }
        Ok(())
    }

    /// Handover payload: final beliefs of objects this agent tracked.
    pub(crate) fn handover_payload(&self, groups: &[Group<T>]) -> Vec<(usize, Arc<ParticleSet<T>>)> {
        groups
            .iter()
            .enumerate()
            .filter(|(m, g)| g.contains(self.id) && self.objects[*m].is_some())
            .map(|(m, _)| (m, Arc::new(self.objects[m].as_ref().expect("held").belief.clone())))
            .collect()
    }

    /// Applies handovers. Participants keep their beliefs; others adopt a
    /// received belief or drop the object if the object was tracked elsewhere.
    pub(crate) fn receive_handover(&mut self, deliveries: Vec<Delivery<T>>, groups: &[Group<T>]) {
        let mut got: BTreeMap<usize, Arc<ParticleSet<T>>> = BTreeMap::new();
        for d in deliveries {
            if let Payload::Handover(items) = d.payload {
                for (m, b) in items {
                    got.entry(m).or_insert(b);
                }
            }
        }
        for (m, g) in groups.iter().enumerate() {
            if g.contains(self.id) || g.members.is_empty() {
                continue;
            }
            match got.get(&m) {
                Some(b) => {
                    let prior_box = None;
                    self.objects[m] = Some(Track { belief: b.as_ref().clone(), prior_box });
                }
                None => self.objects[m] = None,
            }
        }
    }
}
