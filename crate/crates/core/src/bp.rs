//! Belief propagation messages computed on particle sets.
//!
//! Agent beliefs reweight the prediction particles with likelihoods evaluated
//! at the stacked `j`-th particles of every partner. Object messages are
//! evaluated pointwise by averaging the likelihood over an agent's particles.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::RangeLikelihood;
use crate::particles::{resample, ParticleSet};
use crate::scalar::Real;

/// A partner's particles and the range measured to it.
#[derive(Clone, Copy, Debug)]
pub struct Partner<'a, T> {
    pub particles: &'a ParticleSet<T>,
    pub measurement: T,
}

impl<'a, T> Partner<'a, T> {
    pub fn new(particles: &'a ParticleSet<T>, measurement: T) -> Self {
        Self { particles, measurement }
    }
}

/// Adds `log f(y | x^(j), partner^(j))` for every partner to `acc`.
///
/// Each factor is shifted by its own maximum before accumulation, so a factor
/// that is constant over `j` contributes exactly zero.
pub fn accumulate_stacked<T: Real>(
    acc: &mut [T],
    proposal: &ParticleSet<T>,
    partners: &[Partner<'_, T>],
    lf: &RangeLikelihood<T>,
) {
    let mut factor = vec![T::zero(); acc.len()];
    for p in partners {
        let mut max = T::neg_infinity();
        for (j, f) in factor.iter_mut().enumerate() {
            *f = lf.log_between(p.measurement, proposal.stacked(j), p.particles.stacked(j));
            max = max.max(*f);
        }
        for (a, f) in acc.iter_mut().zip(&factor) {
            *a = *a + (*f - max);
        }
    }
}

/// Agent belief: prediction particles weighted by the stacked likelihood product.
pub fn agent_belief_update<T: Real>(
    prediction: &ParticleSet<T>,
    partners: &[Partner<'_, T>],
    sigma_v2: T,
) -> Result<ParticleSet<T>> {
    if prediction.is_point_mass() {
        return Ok(prediction.clone());
    }
    let lf = RangeLikelihood::new(sigma_v2);
    let mut logw: Vec<T> = prediction.weights().iter().map(|w| w.ln()).collect();
    accumulate_stacked(&mut logw, prediction, partners, &lf);
    prediction.log_reweighted(&logw)
}

/// Extrinsic information from an agent to one of its objects: the belief
/// computation with that object's factor left out, resampled.
/// A point-mass prediction (anchor) is returned as is.
pub fn extrinsic_agent_to_object<T: Real, R: Rng + ?Sized>(
    prediction: &ParticleSet<T>,
    partners_without_object: &[Partner<'_, T>],
    sigma_v2: T,
    rng: &mut R,
) -> Result<ParticleSet<T>> {
    if prediction.is_point_mass() {
        return Ok(prediction.clone());
    }
    let weighted = agent_belief_update(prediction, partners_without_object, sigma_v2)?;
    resample(&weighted, rng)
}

/// Object belief from consensus log-products.
pub fn object_weighting<T: Real>(prediction: &ParticleSet<T>, log_products: &[T]) -> Result<ParticleSet<T>> {
    if log_products.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateWeights);
    }
    let logw: Vec<T> = prediction.weights().iter().zip(log_products).map(|(w, v)| w.ln() + *v).collect();
    prediction.log_reweighted(&logw)
}

const EXP_CUTOFF: f64 = 700.0;

/// Particle positions with consecutive duplicates merged. Resampled sets keep
/// copies adjacent, so this removes most repeated kernel evaluations.
struct Centers<T> {
    xy: Vec<T>,
    count: Vec<T>,
    total: T,
}

impl<T: Real> Centers<T> {
    fn of(ps: &ParticleSet<T>) -> Self {
        let mut xy: Vec<T> = Vec::with_capacity(ps.len() * 2);
        let mut count: Vec<T> = Vec::with_capacity(ps.len());
        for j in 0..ps.len() {
            let p = &ps.particle(j)[..2];
            let k = count.len();
            if k > 0 && xy[2 * k - 2] == p[0] && xy[2 * k - 1] == p[1] {
                count[k - 1] = count[k - 1] + T::one();
            } else {
                xy.extend_from_slice(p);
                count.push(T::one());
            }
        }
        Self { xy, count, total: T::from_usize_lossy(ps.len()) }
    }
}

/// Sum of unnormalized Gaussian kernels `exp(-(y - |x - c|)² / 2σ²)` over centers,
/// and the same sum with each term divided by `|x - c|` when `jacobian` is set.
#[inline]
fn ring_sums<T: Real>(x: &[T], centers: &Centers<T>, y: T, inv_two_var: T, jacobian: bool) -> (T, T) {
    let cutoff = T::lit(EXP_CUTOFF);
    let mut s1 = T::zero();
    let mut s2 = T::zero();
    for (c, &k) in centers.xy.chunks_exact(2).zip(&centers.count) {
        let dx = x[0] - c[0];
        let dy = x[1] - c[1];
        let r = (dx * dx + dy * dy).sqrt();
        let e = y - r;
        let q = e * e * inv_two_var;
        if q < cutoff {
            let g = k * (-q).exp();
            s1 = s1 + g;
            if jacobian {
                s2 = s2 + g / r;
            }
        }
    }
    (s1, s2)
}

fn position_pairs<T: Real>(ps: &ParticleSet<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(ps.len() * 2);
    for j in 0..ps.len() {
        out.extend_from_slice(&ps.particle(j)[..2]);
    }
    out
}

/// Monte Carlo message value `(1/J) Σ_j' f(y | x_l^(j'), x)` at one object position.
pub fn mc_message_eval<T: Real>(object_position: &[T], agent_extrinsic: &ParticleSet<T>, y: T, sigma_v2: T) -> T {
    let lf = RangeLikelihood::new(sigma_v2);
    let centers = Centers::of(agent_extrinsic);
    mc_log_value(object_position, &centers, y, &lf).exp().max(T::LIKELIHOOD_FLOOR)
}

#[inline]
fn mc_log_value<T: Real>(x: &[T], centers: &Centers<T>, y: T, lf: &RangeLikelihood<T>) -> T {
    let (s1, _) = ring_sums(x, centers, y, lf.inv_two_var(), false);
    floor_log(lf.log_mode() + (s1 / centers.total).ln())
}

#[inline]
fn floor_log<T: Real>(v: T) -> T {
    let f = T::ln_floor();
    if v > f {
        v
    } else {
        f
    }
}

/// Floored `log φ_{l→m}` at every object particle.
pub fn mc_log_messages<T: Real>(
    object_particles: &ParticleSet<T>,
    agent_extrinsic: &ParticleSet<T>,
    y: T,
    sigma_v2: T,
) -> Vec<T> {
    let lf = RangeLikelihood::new(sigma_v2);
    let centers = Centers::of(agent_extrinsic);
    (0..object_particles.len())
        .map(|j| mc_log_value(object_particles.particle(j), &centers, y, &lf))
        .collect()
}

/// For particles drawn by [`ring_proposal`] around `center`: returns
/// `(log φ, log φ − log q)` at every particle, `q` being the sampling density
/// up to a constant. A clamped denominator yields the floor.
pub fn ring_log_ratio<T: Real>(
    particles: &ParticleSet<T>,
    center: &ParticleSet<T>,
    y: T,
    sigma_v2: T,
) -> (Vec<T>, Vec<T>) {
    let lf = RangeLikelihood::new(sigma_v2);
    let centers = Centers::of(center);
    let n = centers.total;
    let two_pi = T::lit(2.0) * T::PI();
    let mut log_phi = Vec::with_capacity(particles.len());
    let mut ratio = Vec::with_capacity(particles.len());
    for j in 0..particles.len() {
        let (s1, s2) = ring_sums(particles.particle(j), &centers, y, lf.inv_two_var(), true);
        let lp = floor_log(lf.log_mode() + (s1 / n).ln());
        log_phi.push(lp);
        let denom = s2 / (n * two_pi);
        let lq = lf.log_mode() + denom.ln();
        if !(lq > T::ln_floor()) || !lq.is_finite() {
            ratio.push(T::ln_floor());
        } else {
            ratio.push(floor_log(lp - lq));
        }
    }
    (log_phi, ratio)
}

/// Positions drawn around each center particle: uniform bearing, range from
/// `N(y, σ_v²)` truncated to positive values. Sample `j` uses center particle `j`
/// (or the only particle of a point mass). Returns flat `(x, y)` pairs.
pub fn ring_proposal<T: Real, R: Rng + ?Sized>(
    center: &ParticleSet<T>,
    y: T,
    sigma_v2: T,
    count: usize,
    rng: &mut R,
) -> Vec<T> {
    let sd = sigma_v2.sqrt();
    let two_pi = T::lit(2.0) * T::PI();
    let mut out = Vec::with_capacity(count * 2);
    for j in 0..count {
        let c = center.stacked(j);
        let theta = T::unit_uniform(rng) * two_pi;
        let mut r = y + sd * T::standard_normal(rng);
        let mut tries = 0;
        while r <= T::zero() && tries < 64 {
            r = y + sd * T::standard_normal(rng);
            tries += 1;
        }
        let r = r.abs();
        out.push(c[0] + r * theta.cos());
        out.push(c[1] + r * theta.sin());
    }
    out
}

/// Pointwise evaluation of the prediction message used by the alternative proposal.
#[derive(Clone, Debug, PartialEq)]
pub enum PredictionDensity<T> {
    /// Uniform (or negligibly varying) prior: a constant that cancels.
    Flat,
    /// Uniform on `[lo0, hi0] × [lo1, hi1]`: constant inside, floor outside.
    Box { lo: [T; 2], hi: [T; 2] },
    /// Equal-weight Gaussian mixture over predicted positions (flat pairs) with per-axis variance.
    Kernel { centers: Vec<T>, variance: T },
}

impl<T: Real> PredictionDensity<T> {
    /// Kernel density of the positions of `prediction` with bandwidth `variance`.
    pub fn kernel(prediction: &ParticleSet<T>, variance: T) -> Self {
        PredictionDensity::Kernel { centers: position_pairs(prediction), variance }
    }

    pub fn log_eval(&self, x: &[T]) -> T {
        match self {
            PredictionDensity::Flat => T::zero(),
            PredictionDensity::Box { lo, hi } => {
                if x[0] >= lo[0] && x[0] <= hi[0] && x[1] >= lo[1] && x[1] <= hi[1] {
                    T::zero()
                } else {
                    T::ln_floor()
                }
            }
            PredictionDensity::Kernel { centers, variance } => {
                let inv = T::one() / (T::lit(2.0) * *variance);
                let cutoff = T::lit(EXP_CUTOFF);
                let mut s = T::zero();
                for c in centers.chunks_exact(2) {
                    let dx = x[0] - c[0];
                    let dy = x[1] - c[1];
                    let q = (dx * dx + dy * dy) * inv;
                    if q < cutoff {
                        s = s + (-q).exp();
                    }
                }
                let n = T::from_usize_lossy(centers.len() / 2);
                floor_log((s / (n * T::lit(2.0) * T::PI() * *variance)).ln())
            }
        }
    }
}

/// Alternative proposal: positions are drawn around the most informative
/// partner `lhat`; remaining components come from `carrier` particle `j`.
/// Weights are `φ_→n · Π_others f · φ_lhat / q`. Returns the weighted set.
pub fn alt_proposal_object<T: Real, R: Rng + ?Sized>(
    lhat: Partner<'_, T>,
    others: &[Partner<'_, T>],
    carrier: Option<&ParticleSet<T>>,
    prediction: &PredictionDensity<T>,
    sigma_v2: T,
    count: usize,
    rng: &mut R,
) -> Result<ParticleSet<T>> {
    let positions = ring_proposal(lhat.particles, lhat.measurement, sigma_v2, count, rng);
    let particles = attach_carrier(positions, carrier, count)?;
    let (_, ratio) = ring_log_ratio(&particles, lhat.particles, lhat.measurement, sigma_v2);
    let lf = RangeLikelihood::new(sigma_v2);
    let mut logw = ratio;
    for (j, w) in logw.iter_mut().enumerate() {
        *w = *w + prediction.log_eval(particles.particle(j));
    }
    accumulate_stacked(&mut logw, &particles, others, &lf);
    particles.log_reweighted(&logw)
}

/// Builds particles from flat positions plus the trailing components of `carrier`.
pub fn attach_carrier<T: Real>(positions: Vec<T>, carrier: Option<&ParticleSet<T>>, count: usize) -> Result<ParticleSet<T>> {
    match carrier {
        None => ParticleSet::uniform(2, positions),
        Some(c) if c.dim() == 2 => ParticleSet::uniform(2, positions),
        Some(c) => {
            let d = c.dim();
            let mut states = Vec::with_capacity(count * d);
            for j in 0..count {
                states.extend_from_slice(&positions[2 * j..2 * j + 2]);
                states.extend_from_slice(&c.stacked(j)[2..]);
            }
            ParticleSet::uniform(d, states)
        }
    }
}

/// Extrinsic information from an object to an observing agent:
/// weights `∝ exp(|A| ζ^(C) − ζ^(0))` on the object particles, resampled.
pub fn extrinsic_object_to_agent<T: Real, R: Rng + ?Sized>(
    prediction_m: &ParticleSet<T>,
    log_sum_all: &[T],
    log_own: &[T],
    n_observers: usize,
    rng: &mut R,
) -> Result<ParticleSet<T>> {
    let a = T::from_usize_lossy(n_observers);
    let logw: Vec<T> = prediction_m
        .weights()
        .iter()
        .zip(log_sum_all.iter().zip(log_own))
        .map(|(w, (s, o))| w.ln() + a * *s - *o)
        .collect();
    let weighted = prediction_m.log_reweighted(&logw)?;
    resample(&weighted, rng)
}

/// Candidate with the smallest variance; ties go to the lowest id.
pub fn select_lhat<T: Real>(candidates: &[(usize, T)]) -> Result<usize> {
    candidates
        .iter()
        .copied()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)))
        .map(|(id, _)| id)
        .ok_or(Error::EmptyObserverSet(usize::MAX))
}
