//! Particle representations and the generic sequential Monte Carlo steps.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{EntityState, MotionModel};
use crate::scalar::Real;

/// Weighted particles stored row-major: particle `j` is `states[j*dim..(j+1)*dim]`.
///
/// A set holding a single particle acts as a point mass and is broadcast
/// over any particle index by [`ParticleSet::stacked`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet<T> {
    dim: usize,
    states: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> ParticleSet<T> {
    /// Validates shapes and normalizes `weights`.
    pub fn new(dim: usize, states: Vec<T>, weights: Vec<T>) -> Result<Self> {
        if dim == 0 || states.len() != weights.len() * dim {
            return Err(Error::DimensionMismatch { expected: weights.len() * dim, got: states.len() });
        }
        if weights.is_empty() {
            return Err(Error::DegenerateWeights);
        }
        let weights = normalize(&weights)?;
        Ok(Self { dim, states, weights })
    }

    pub fn uniform(dim: usize, states: Vec<T>) -> Result<Self> {
        if dim == 0 || states.is_empty() || states.len() % dim != 0 {
            return Err(Error::DimensionMismatch { expected: dim, got: states.len() });
        }
        let j = states.len() / dim;
        let w = T::one() / T::from_usize_lossy(j);
        Ok(Self { dim, states, weights: vec![w; j] })
    }

    pub fn point_mass(state: &[T]) -> Self {
        Self { dim: state.len(), states: state.to_vec(), weights: vec![T::one()] }
    }

    /// Replaces the weights, normalizing them. Particles are untouched.
    pub fn reweighted(&self, weights: Vec<T>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: weights.len() });
        }
        let weights = normalize(&weights)?;
        Ok(Self { dim: self.dim, states: self.states.clone(), weights })
    }

    /// Like [`reweighted`](Self::reweighted) but from log-weights.
    pub fn log_reweighted(&self, log_weights: &[T]) -> Result<Self> {
        if log_weights.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: log_weights.len() });
        }
        let weights = normalize_log(log_weights)?;
        Ok(Self { dim: self.dim, states: self.states.clone(), weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn states(&self) -> &[T] {
        &self.states
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn particle(&self, j: usize) -> &[T] {
        &self.states[j * self.dim..(j + 1) * self.dim]
    }

    /// Particle `j`, or the only particle of a point mass.
    #[inline]
    pub fn stacked(&self, j: usize) -> &[T] {
        let j = if self.weights.len() == 1 { 0 } else { j };
        &self.states[j * self.dim..(j + 1) * self.dim]
    }

    pub fn is_point_mass(&self) -> bool {
        self.weights.len() == 1
    }

    pub fn is_uniform(&self) -> bool {
        self.weights.iter().all(|&w| w == self.weights[0])
    }

    /// Position components only, weights kept.
    pub fn positions(&self) -> ParticleSet<T> {
        if self.dim == 2 {
            return self.clone();
        }
        let mut states = Vec::with_capacity(self.len() * 2);
        for j in 0..self.len() {
            states.extend_from_slice(&self.particle(j)[..2]);
        }
        Self { dim: 2, states, weights: self.weights.clone() }
    }

    /// Joint set whose particle `j` concatenates this set's particle `j` with
    /// `other`'s particle `j`. Keeps this set's weights.
    pub fn stack_with(&self, other: &ParticleSet<T>) -> Result<ParticleSet<T>> {
        if !other.is_point_mass() && other.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: other.len() });
        }
        let dim = self.dim + other.dim;
        let mut states = Vec::with_capacity(self.len() * dim);
        for j in 0..self.len() {
            states.extend_from_slice(self.particle(j));
            states.extend_from_slice(other.stacked(j));
        }
        Ok(Self { dim, states, weights: self.weights.clone() })
    }

    /// Flat `(x, y)` pairs of `count` particles, repeating a point mass.
    pub fn position_block(&self, count: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(count * 2);
        for j in 0..count {
            out.extend_from_slice(&self.stacked(j)[..2]);
        }
        out
    }
}

/// Normalizes nonnegative weights to sum to one.
pub fn normalize<T: Real>(weights: &[T]) -> Result<Vec<T>> {
    let mut max = T::zero();
    for &w in weights {
        if !(w >= T::zero()) || !w.is_finite() {
            return Err(Error::DegenerateWeights);
        }
        max = max.max(w);
    }
    if max <= T::zero() {
        return Err(Error::DegenerateWeights);
    }
    let scaled: Vec<T> = weights.iter().map(|&w| w / max).collect();
    let sum: T = scaled.iter().copied().sum();
    Ok(scaled.into_iter().map(|w| w / sum).collect())
}

/// Normalizes log-weights by subtracting their maximum before exponentiating.
pub fn normalize_log<T: Real>(log_weights: &[T]) -> Result<Vec<T>> {
    let mut max = T::neg_infinity();
    for &v in log_weights {
        if v.is_nan() || v == T::infinity() {
            return Err(Error::DegenerateWeights);
        }
        max = max.max(v);
    }
    if !max.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let w: Vec<T> = log_weights.iter().map(|&v| (v - max).exp()).collect();
    let sum: T = w.iter().copied().sum();
    Ok(w.into_iter().map(|x| x / sum).collect())
}

/// Draws one successor per particle; weights pass through unchanged.
pub fn message_filter<T: Real, R: Rng + ?Sized>(
    prior: &ParticleSet<T>,
    model: &MotionModel<T>,
    rng: &mut R,
) -> Result<ParticleSet<T>> {
    if model.dim() != prior.dim {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: prior.dim });
    }
    if model.is_static() {
        return Ok(prior.clone());
    }
    let mut states = vec![T::zero(); prior.states.len()];
    for (src, dst) in prior.states.chunks(prior.dim).zip(states.chunks_mut(prior.dim)) {
        model.sample_into(src, dst, rng);
    }
    Ok(ParticleSet { dim: prior.dim, states, weights: prior.weights.clone() })
}

/// Systematic resampling to `ps.len()` equally weighted particles.
pub fn resample<T: Real, R: Rng + ?Sized>(ps: &ParticleSet<T>, rng: &mut R) -> Result<ParticleSet<T>> {
    resample_to(ps, ps.len(), rng)
}

/// Systematic resampling to `count` equally weighted particles.
pub fn resample_to<T: Real, R: Rng + ?Sized>(
    ps: &ParticleSet<T>,
    count: usize,
    rng: &mut R,
) -> Result<ParticleSet<T>> {
    let weights = normalize(&ps.weights)?;
    let indices = systematic_indices(&weights, count, T::unit_uniform(rng));
    let mut states = Vec::with_capacity(count * ps.dim);
    for i in indices {
        states.extend_from_slice(ps.particle(i));
    }
    let w = T::one() / T::from_usize_lossy(count);
    Ok(ParticleSet { dim: ps.dim, states, weights: vec![w; count] })
}

/// Indices selected by systematic resampling with offset `u ∈ [0, 1)`.
pub fn systematic_indices<T: Real>(weights: &[T], count: usize, u: T) -> Vec<usize> {
    let n = T::from_usize_lossy(count);
    let mut out = Vec::with_capacity(count);
    let mut cum = weights[0];
    let mut i = 0;
    let last = weights.len() - 1;
    for k in 0..count {
        let pos = (T::from_usize_lossy(k) + u) / n;
        while pos >= cum && i < last {
            i += 1;
            cum = cum + weights[i];
        }
        out.push(i);
    }
    out
}

/// Weighted mean of all state components.
pub fn mmse_estimate<T: Real>(ps: &ParticleSet<T>) -> Vec<T> {
    let mut mean = vec![T::zero(); ps.dim];
    for (x, &w) in ps.states.chunks(ps.dim).zip(&ps.weights) {
        for (m, &xi) in mean.iter_mut().zip(x) {
            *m = *m + w * xi;
        }
    }
    mean
}

pub fn mmse_state<T: Real>(ps: &ParticleSet<T>) -> Result<EntityState<T>> {
    EntityState::from_slice(&mmse_estimate(ps))
}

/// Weighted variance of each position component.
pub fn component_variances<T: Real>(ps: &ParticleSet<T>) -> [T; 2] {
    if ps.is_point_mass() {
        return [T::zero(); 2];
    }
    let mean = mmse_estimate(ps);
    let mut var = [T::zero(); 2];
    for (x, &w) in ps.states.chunks(ps.dim).zip(&ps.weights) {
        for c in 0..2 {
            let d = x[c] - mean[c];
            var[c] = var[c] + w * d * d;
        }
    }
    var
}

/// Mean squared distance of the positions from their mean, `0` for a point mass.
pub fn empirical_variance<T: Real>(ps: &ParticleSet<T>) -> T {
    let [a, b] = component_variances(ps);
    a + b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, RngStream, StreamKey};
    use proptest::prelude::*;

    fn stream(seed: u64) -> RngStream {
        RngStream::new(seed, StreamKey::new(0, 0, 0, Purpose::Resample))
    }

    #[test]
    fn static_filter_keeps_particles_and_weights() {
        let ps = ParticleSet::new(2, vec![0.0, 1.0, 2.0, 3.0], vec![0.25, 0.75]).unwrap();
        let out = message_filter(&ps, &MotionModel::static_model(2), &mut stream(1)).unwrap();
        assert_eq!(out, ps);
    }

    #[test]
    fn filter_passes_weights_bitwise() {
        let ps = ParticleSet::new(4, vec![0.0; 12], vec![0.1, 0.2, 0.7]).unwrap();
        let out = message_filter(&ps, &MotionModel::constant_velocity(1.0), &mut stream(2)).unwrap();
        assert_eq!(out.weights(), ps.weights());
        let eq = ParticleSet::uniform(4, vec![1.0; 40]).unwrap();
        let out = message_filter(&eq, &MotionModel::constant_velocity(1.0), &mut stream(3)).unwrap();
        assert!(out.is_uniform());
    }

    #[test]
    fn random_walk_matches_grid_convolution() {
        // Prior: two-component mixture on x. Kernel: N(0, s²) on x only.
        let s2 = 0.5f64;
        let model = MotionModel::linear(2, vec![1.0, 0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0, 0.0], s2).unwrap();
        let prior_pdf = |x: f64| {
            let g = |m: f64, v: f64| (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
            0.3 * g(-2.0, 0.4) + 0.7 * g(1.5, 1.0)
        };
        // Grid convolution.
        let (lo, hi, n) = (-12.0, 12.0, 4801);
        let h = (hi - lo) / (n - 1) as f64;
        let xs: Vec<f64> = (0..n).map(|i| lo + i as f64 * h).collect();
        let prior: Vec<f64> = xs.iter().map(|&x| prior_pdf(x)).collect();
        let kern = |d: f64| (-(d * d) / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2).sqrt();
        let mut post = vec![0.0; n];
        for (i, &x) in xs.iter().enumerate() {
            post[i] = xs.iter().zip(&prior).map(|(&z, &p)| p * kern(x - z)).sum::<f64>() * h;
        }
        let mass: f64 = post.iter().sum::<f64>() * h;
        let gm: f64 = xs.iter().zip(&post).map(|(x, p)| x * p).sum::<f64>() * h / mass;
        let gv: f64 = xs.iter().zip(&post).map(|(x, p)| (x - gm).powi(2) * p).sum::<f64>() * h / mass;

        // Particles drawn from the prior by inverse CDF on the grid.
        let j = 20_000;
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for p in &prior {
            acc += p * h;
            cdf.push(acc);
        }
        let mut rng = stream(11);
        let mut states = Vec::with_capacity(2 * j);
        for _ in 0..j {
            let u = f64::unit_uniform(&mut rng) * acc;
            let i = cdf.partition_point(|&c| c < u).min(n - 1);
            states.extend_from_slice(&[xs[i], 0.0]);
        }
        let ps = ParticleSet::uniform(2, states).unwrap();
        let out = message_filter(&ps, &model, &mut rng).unwrap();
        let m = mmse_estimate(&out)[0];
        let v = component_variances(&out)[0];
        let sd = gv.sqrt();
        assert!((m - gm).abs() < 3.0 * sd / (j as f64).sqrt(), "mean {m} vs {gm}");
        // Variance of the sample variance is about 2σ⁴/J for near-Gaussian shapes; allow 3σ of that
        // plus the grid discretisation of the prior sample.
        assert!((v - gv).abs() < 3.0 * gv * (2.0 / j as f64).sqrt() + 2.0 * h * h, "var {v} vs {gv}");
    }

    #[test]
    fn resample_point_mass() {
        let ps = ParticleSet::new(1, vec![10.0, 20.0, 30.0], vec![1.0, 0.0, 0.0]).unwrap();
        let out = resample(&ps, &mut stream(4)).unwrap();
        assert_eq!(out.states(), &[10.0, 10.0, 10.0]);
        assert!(out.is_uniform());
    }

    #[test]
    fn resample_uniform_keeps_each_particle_once() {
        let states: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let ps = ParticleSet::uniform(1, states.clone()).unwrap();
        let out = resample(&ps, &mut stream(5)).unwrap();
        assert_eq!(out.states(), &states[..]);
    }

    #[test]
    fn resample_preserves_weighted_mean() {
        let j = 500;
        let mut gen = stream(6);
        let states: Vec<f64> = (0..j).map(|_| f64::standard_normal(&mut gen) * 3.0).collect();
        let weights: Vec<f64> = (0..j).map(|_| f64::unit_uniform(&mut gen)).collect();
        let ps = ParticleSet::new(1, states, weights).unwrap();
        let wm = mmse_estimate(&ps)[0];
        let sd = ps
            .states()
            .iter()
            .zip(ps.weights())
            .map(|(x, w)| w * (x - wm).powi(2))
            .sum::<f64>()
            .sqrt();
        let mut worst = 0.0f64;
        for t in 0..50 {
            let out = resample(&ps, &mut stream(100 + t)).unwrap();
            worst = worst.max((mmse_estimate(&out)[0] - wm).abs());
        }
        assert!(worst < 5.0 * sd / (j as f64).sqrt(), "{worst}");
    }

    #[test]
    fn resample_chi_square() {
        let probs = [0.1, 0.2, 0.3, 0.15, 0.25];
        let ps = ParticleSet::new(1, vec![0.0, 1.0, 2.0, 3.0, 4.0], probs.to_vec()).unwrap();
        let j = 10_000;
        let out = resample_to(&ps, j, &mut stream(7)).unwrap();
        let mut counts = [0usize; 5];
        for &x in out.states() {
            counts[x as usize] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .zip(probs)
            .map(|(&c, p)| {
                let e = p * j as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        // 4 degrees of freedom, 0.999 quantile.
        assert!(chi2 < 18.47, "{chi2}");
    }

    #[test]
    fn degenerate_weights() {
        assert_eq!(normalize(&[0.0f64, 0.0]).unwrap_err(), Error::DegenerateWeights);
        let ps = ParticleSet { dim: 1, states: vec![1.0, 2.0], weights: vec![0.0, 0.0] };
        assert_eq!(resample(&ps, &mut stream(8)).unwrap_err(), Error::DegenerateWeights);
        assert_eq!(normalize_log(&[f64::NEG_INFINITY]).unwrap_err(), Error::DegenerateWeights);
    }

    #[test]
    fn mmse_examples() {
        let single = ParticleSet::point_mass(&[3.0, -2.0]);
        assert_eq!(mmse_estimate(&single), vec![3.0, -2.0]);
        let two = ParticleSet::new(1, vec![0.0, 1.0], vec![0.25, 0.75]).unwrap();
        assert_eq!(mmse_estimate(&two), vec![0.75]);
        let sym = ParticleSet::uniform(2, vec![4.0, 6.0, 6.0, 4.0, 5.0, 5.0, 4.0, 4.0, 6.0, 6.0]).unwrap();
        let m: Vec<f64> = mmse_estimate(&sym);
        assert!((m[0] - 5.0).abs() < 1e-12 && (m[1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn variance_examples() {
        let same = ParticleSet::uniform(2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(empirical_variance(&same), 0.0);
        let pair = ParticleSet::uniform(2, vec![0.0, 0.0, 2.0, 0.0]).unwrap();
        assert_eq!(empirical_variance(&pair), 1.0);
        assert_eq!(empirical_variance(&ParticleSet::point_mass(&[7.0, 8.0])), 0.0);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[2.0, 2.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(normalize(&[1.0]).unwrap(), vec![1.0]);
        let w = normalize_log(&[-1000.0f64, -1001.0]).unwrap();
        let expect = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((w[0] - expect).abs() < 1e-15 && (w[1] - (1.0 - expect)).abs() < 1e-15);
        assert!((w[0] - 0.731).abs() < 1e-3);
        let w32 = normalize_log(&[-1000.0f32, -1001.0]).unwrap();
        assert!((w32[0] - 0.731).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn normalized_weights_are_valid(raw in prop::collection::vec(-800.0f64..50.0, 1..300)) {
            let w = normalize_log(&raw).unwrap();
            prop_assert!(w.iter().all(|x| x.is_finite() && *x >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn resampled_sets_are_uniform(raw in prop::collection::vec(0.0f64..1.0, 2..200), seed: u64) {
            prop_assume!(raw.iter().any(|&x| x > 0.0));
            let states: Vec<f64> = (0..raw.len()).map(|i| i as f64).collect();
            let ps = ParticleSet::new(1, states, raw).unwrap();
            let out = resample(&ps, &mut stream(seed)).unwrap();
            prop_assert_eq!(out.len(), ps.len());
            prop_assert!(out.is_uniform());
            prop_assert!((out.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for &x in out.states() {
                prop_assert!(ps.weights()[x as usize] > 0.0);
            }
        }
    }
}
