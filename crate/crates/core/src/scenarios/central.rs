//! Centralized estimators with access to every measurement: belief
//! propagation with stacked message products, and the stacked-state
//! bootstrap particle filter.

use crate::error::{Error, Result};
use crate::model::{MotionModel, RangeLikelihood};
use crate::particles::{message_filter, mmse_estimate, normalize_log, resample, ParticleSet};
use crate::rng::{Purpose, RngStream, StreamKey};
use crate::scalar::Real;
use crate::topology::TopologySnapshot;

/// Range `y` measured between entities `a` and `b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Factor<T> {
    pub a: usize,
    pub b: usize,
    pub y: T,
}

/// One factor per measurement of the snapshot.
pub fn factors_of<T: Real>(topo: &TopologySnapshot, measurements: &[Vec<(usize, T)>]) -> Vec<Factor<T>> {
    debug_assert_eq!(topo.n_agents(), measurements.len());
    measurements
        .iter()
        .enumerate()
        .flat_map(|(a, ms)| ms.iter().map(move |&(b, y)| Factor { a, b, y }))
        .collect()
}

/// Belief propagation over all entities in one place. Every measurement
/// factor informs both of its entities; anchors are point masses.
#[derive(Clone, Debug)]
pub struct CentralPm<T> {
    beliefs: Vec<ParticleSet<T>>,
    motions: Vec<MotionModel<T>>,
    iterations: usize,
    lf: RangeLikelihood<T>,
    seed: u64,
    time: usize,
}

impl<T: Real> CentralPm<T> {
    pub fn new(beliefs: Vec<ParticleSet<T>>, motions: Vec<MotionModel<T>>, iterations: usize, sigma_v2: T, seed: u64) -> Result<Self> {
        if beliefs.len() != motions.len() {
            return Err(Error::DimensionMismatch { expected: beliefs.len(), got: motions.len() });
        }
        if iterations == 0 {
            return Err(Error::Config("at least one iteration is required".into()));
        }
        Ok(Self { beliefs, motions, iterations, lf: RangeLikelihood::new(sigma_v2), seed, time: 0 })
    }

    pub fn beliefs(&self) -> &[ParticleSet<T>] {
        &self.beliefs
    }

    /// One time step. Returns `[p - 1][entity]` state estimates.
    pub fn step(&mut self, factors: &[Factor<T>]) -> Result<Vec<Vec<Vec<T>>>> {
        let n = self.time + 1;
        let count = self.beliefs.len();
        let mut pred = Vec::with_capacity(count);
        for (k, (b, m)) in self.beliefs.iter().zip(&self.motions).enumerate() {
            if b.is_point_mass() {
                pred.push(b.clone());
            } else {
                let mut rng = RngStream::new(self.seed, StreamKey::new(k, n, 0, Purpose::Prediction));
                pred.push(message_filter(b, m, &mut rng)?);
            }
        }
        let mut incident: Vec<Vec<(usize, usize)>> = vec![Vec::new(); count];
        for (i, f) in factors.iter().enumerate() {
            if f.a >= count || f.b >= count || f.a == f.b {
                return Err(Error::InvalidTopology(format!("factor between {} and {}", f.a, f.b)));
            }
            incident[f.a].push((i, f.b));
            incident[f.b].push((i, f.a));
        }
        // Extrinsic messages entering each factor from its `a` and `b` side.
        let mut from_a: Vec<ParticleSet<T>> = factors.iter().map(|f| pred[f.a].positions()).collect();
        let mut from_b: Vec<ParticleSet<T>> = factors.iter().map(|f| pred[f.b].positions()).collect();

        let mut estimates = Vec::with_capacity(self.iterations);
        for p in 1..=self.iterations {
            let last = p == self.iterations;
            let mut next_a = from_a.clone();
            let mut next_b = from_b.clone();
            let mut est = Vec::with_capacity(count);
            for k in 0..count {
                let pk = &pred[k];
                if pk.is_point_mass() {
                    est.push(pk.particle(0).to_vec());
                    continue;
                }
                let j = pk.len();
                let base: Vec<T> = pk.weights().iter().map(|w| w.ln()).collect();
                let mut total = base.clone();
                let mut logs: Vec<Vec<T>> = Vec::with_capacity(incident[k].len());
                for &(i, other) in &incident[k] {
                    let f = &factors[i];
                    let msg = if f.a == other { &from_a[i] } else { &from_b[i] };
                    let l: Vec<T> = (0..j).map(|jj| self.lf.log_between(f.y, pk.stacked(jj), msg.stacked(jj))).collect();
                    for (t, v) in total.iter_mut().zip(&l) {
                        *t = *t + *v;
                    }
                    logs.push(l);
                }
                let belief = pk.log_reweighted(&total)?;
                est.push(mmse_estimate(&belief));
                if last {
                    let mut rng = RngStream::new(self.seed, StreamKey::new(k, n, p, Purpose::Resample));
                    self.beliefs[k] = resample(&belief, &mut rng)?;
                    continue;
                }
                for (slot, &(i, _)) in incident[k].iter().enumerate() {
                    let ext: Vec<T> = total.iter().zip(&logs[slot]).map(|(t, v)| *t - *v).collect();
                    let weighted = ParticleSet::new(pk.dim(), pk.states().to_vec(), normalize_log(&ext)?)?;
                    let mut rng =
                        RngStream::new(self.seed, StreamKey::new(k, n, p, Purpose::ExtrinsicResample).with_peer(i));
                    let msg = resample(&weighted, &mut rng)?.positions();
                    if factors[i].a == k {
                        next_a[i] = msg;
                    } else {
                        next_b[i] = msg;
                    }
                }
            }
            estimates.push(est);
            from_a = next_a;
            from_b = next_b;
        }
        self.time = n;
        Ok(estimates)
    }
}

/// Bootstrap particle filter on the concatenated state of all non-anchor
/// entities. The transition is applied as one dense matrix.
#[derive(Clone, Debug)]
pub struct StackedPf<T> {
    /// Offset of each entity in the stacked state; `None` for anchors.
    offsets: Vec<Option<usize>>,
    dims: Vec<usize>,
    anchors: Vec<Option<[T; 2]>>,
    dim: usize,
    /// `dim × dim`, row-major.
    transition: Vec<T>,
    /// Per entity: offset, dimension, `W` (`dim_k × 2`) and noise deviation.
    noise: Vec<(usize, usize, Vec<T>, T)>,
    particles: ParticleSet<T>,
    lf: RangeLikelihood<T>,
    seed: u64,
    time: usize,
}

impl<T: Real> StackedPf<T> {
    /// `priors[k]` is a point mass for anchors; all other priors must hold `J` particles.
    pub fn new(priors: &[ParticleSet<T>], motions: &[MotionModel<T>], sigma_v2: T, seed: u64) -> Result<Self> {
        if priors.len() != motions.len() {
            return Err(Error::DimensionMismatch { expected: priors.len(), got: motions.len() });
        }
        let mut offsets = Vec::with_capacity(priors.len());
        let mut anchors = Vec::with_capacity(priors.len());
        let mut dim = 0;
        let mut j = None;
        for p in priors {
            if p.is_point_mass() {
                offsets.push(None);
                anchors.push(Some([p.particle(0)[0], p.particle(0)[1]]));
            } else {
                if *j.get_or_insert(p.len()) != p.len() {
                    return Err(Error::DimensionMismatch { expected: j.unwrap_or(0), got: p.len() });
                }
                offsets.push(Some(dim));
                anchors.push(None);
                dim += p.dim();
            }
        }
        let j = j.ok_or_else(|| Error::Config("no entity to estimate".into()))?;
        let mut transition = vec![T::zero(); dim * dim];
        let mut noise = Vec::new();
        for (k, m) in motions.iter().enumerate() {
            let Some(off) = offsets[k] else { continue };
            let d = priors[k].dim();
            if m.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: m.dim() });
            }
            match m {
                MotionModel::Static { .. } => {
                    for i in 0..d {
                        transition[(off + i) * dim + off + i] = T::one();
                    }
                }
                MotionModel::Linear { g, w, sigma_u2, .. } => {
                    for r in 0..d {
                        for c in 0..d {
                            transition[(off + r) * dim + off + c] = g[r * d + c];
                        }
                    }
                    noise.push((off, d, w.clone(), sigma_u2.sqrt()));
                }
            }
        }
        let mut states = Vec::with_capacity(j * dim);
        for jj in 0..j {
            for (k, p) in priors.iter().enumerate() {
                if offsets[k].is_some() {
                    states.extend_from_slice(p.particle(jj));
                }
            }
        }
        let particles = ParticleSet::uniform(dim, states)?;
        let dims = priors.iter().map(|p| p.dim()).collect();
        Ok(Self { offsets, dims, anchors, dim, transition, noise, particles, lf: RangeLikelihood::new(sigma_v2), seed, time: 0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn position(&self, x: &[T], k: usize) -> [T; 2] {
        match (self.offsets[k], self.anchors[k]) {
            (Some(off), _) => [x[off], x[off + 1]],
            (None, Some(a)) => a,
            (None, None) => unreachable!("every entity is either stacked or fixed"),
        }
    }

    /// One time step. Returns the estimate of every entity (anchors: their position).
    pub fn step(&mut self, factors: &[Factor<T>]) -> Result<Vec<Vec<T>>> {
        let n = self.time + 1;
        let d = self.dim;
        let j = self.particles.len();
        let mut rng = RngStream::new(self.seed, StreamKey::new(0, n, 0, Purpose::Baseline));
        let mut states = vec![T::zero(); j * d];
        for (src, dst) in self.particles.states().chunks_exact(d).zip(states.chunks_exact_mut(d)) {
            for (r, out) in dst.iter_mut().enumerate() {
                let row = &self.transition[r * d..(r + 1) * d];
                *out = row.iter().zip(src).fold(T::zero(), |acc, (g, x)| acc + *g * *x);
            }
            for (off, dk, w, sd) in &self.noise {
                let u = [*sd * T::standard_normal(&mut rng), *sd * T::standard_normal(&mut rng)];
                for r in 0..*dk {
                    dst[off + r] = dst[off + r] + w[r * 2] * u[0] + w[r * 2 + 1] * u[1];
                }
            }
        }
        let mut logw = vec![T::zero(); j];
        for (x, lw) in states.chunks_exact(d).zip(logw.iter_mut()) {
            for f in factors {
                let pa = self.position(x, f.a);
                let pb = self.position(x, f.b);
                *lw = *lw + self.lf.log_between(f.y, &pa, &pb);
            }
        }
        let weighted = ParticleSet::new(d, states, normalize_log(&logw)?)?;
        let mean = mmse_estimate(&weighted);
        let mut rng = RngStream::new(self.seed, StreamKey::new(0, n, 1, Purpose::Baseline));
        self.particles = resample(&weighted, &mut rng)?;
        self.time = n;
        Ok((0..self.offsets.len())
            .map(|k| match self.offsets[k] {
                Some(off) => mean[off..off + self.dims[k]].to_vec(),
                None => self.anchors[k].expect("fixed").to_vec(),
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring_world(j: usize, seed: u64) -> (Vec<ParticleSet<f64>>, Vec<MotionModel<f64>>) {
        let mut rng = RngStream::new(seed, StreamKey::new(9, 0, 0, Purpose::Prior));
        let states = (0..2 * j).map(|_| 20.0 * f64::unit_uniform(&mut rng)).collect();
        let priors = vec![
            ParticleSet::point_mass(&[0.0, 0.0]),
            ParticleSet::point_mass(&[20.0, 0.0]),
            ParticleSet::uniform(2, states).unwrap(),
        ];
        (priors, vec![MotionModel::static_model(2); 3])
    }

    #[test]
    fn central_pm_and_spf_agree_on_a_fixed_object() {
        let (priors, motions) = ring_world(4000, 5);
        let factors = vec![Factor { a: 0, b: 2, y: 10.0f64.hypot(10.0) }, Factor { a: 1, b: 2, y: 10.0f64.hypot(10.0) }];
        let mut pm = CentralPm::new(priors.clone(), motions.clone(), 1, 1.0, 3).unwrap();
        let mut spf = StackedPf::new(&priors, &motions, 1.0, 3).unwrap();
        let a = pm.step(&factors).unwrap();
        let b = spf.step(&factors).unwrap();
        assert_eq!(spf.dim(), 2);
        // Unimodal posterior around (10, 10) inside the prior box.
        for e in [&a[0][2], &b[2]] {
            assert!((e[0] - 10.0).abs() < 0.3 && (e[1] - 10.0).abs() < 0.5, "{e:?}");
        }
        assert_eq!(b[0], vec![0.0, 0.0]);
    }

    #[test]
    fn spf_transition_is_block_diagonal_constant_velocity() {
        let priors = vec![
            ParticleSet::uniform(4, vec![1.0, 2.0, 0.5, -0.5, 1.0, 2.0, 0.5, -0.5]).unwrap(),
            ParticleSet::uniform(2, vec![3.0, 3.0, 3.0, 3.0]).unwrap(),
        ];
        let motions = vec![MotionModel::constant_velocity(0.0), MotionModel::static_model(2)];
        let mut spf = StackedPf::new(&priors, &motions, 1.0, 1).unwrap();
        let est = spf.step(&[]).unwrap();
        assert_eq!(est[0], vec![1.5, 1.5, 0.5, -0.5]);
        assert_eq!(est[1], vec![3.0, 3.0]);
    }

    #[test]
    fn central_pm_extrinsic_messages_change_later_iterations() {
        let (mut priors, mut motions) = ring_world(500, 2);
        priors.push(priors[2].clone());
        motions.push(MotionModel::static_model(2));
        let factors = vec![
            Factor { a: 0, b: 2, y: 10.0f64.hypot(10.0) },
            Factor { a: 2, b: 3, y: 5.0 },
            Factor { a: 1, b: 3, y: 15.0f64.hypot(10.0) },
        ];
        let mut pm = CentralPm::new(priors, motions, 2, 1.0, 4).unwrap();
        let est = pm.step(&factors).unwrap();
        assert_eq!(est.len(), 2);
        assert_ne!(est[0][2], est[1][2]);
    }
}
