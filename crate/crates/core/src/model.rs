//! Entity states, motion and measurement models.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntityKind {
    MobileAgent,
    Anchor,
    Object,
}

impl EntityKind {
    pub fn is_agent(self) -> bool {
        !matches!(self, EntityKind::Object)
    }
}

/// Entity index plus kind. Agents occupy indices `0..L`, objects `L..L+|O|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId {
    pub index: usize,
    pub kind: EntityKind,
}

impl EntityId {
    pub fn new(index: usize, kind: EntityKind) -> Self {
        Self { index, kind }
    }
}

/// Position, optionally followed by velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct EntityState<T> {
    pub position: [T; 2],
    pub velocity: Option<[T; 2]>,
}

impl<T: Real> EntityState<T> {
    pub fn at(x: T, y: T) -> Self {
        Self { position: [x, y], velocity: None }
    }

    pub fn moving(position: [T; 2], velocity: [T; 2]) -> Self {
        Self { position, velocity: Some(velocity) }
    }

    pub fn dim(&self) -> usize {
        if self.velocity.is_some() {
            4
        } else {
            2
        }
    }

    pub fn to_vec(&self) -> Vec<T> {
        let mut v = self.position.to_vec();
        if let Some(vel) = self.velocity {
            v.extend_from_slice(&vel);
        }
        v
    }

    pub fn from_slice(s: &[T]) -> Result<Self> {
        match s.len() {
            2 => Ok(Self::at(s[0], s[1])),
            4 => Ok(Self::moving([s[0], s[1]], [s[2], s[3]])),
            n => Err(Error::DimensionMismatch { expected: 4, got: n }),
        }
    }
}

/// State-transition model `x_n = G x_{n-1} + W u_n`, `u_n ~ N(0, σ_u² I₂)`.
#[derive(Clone, Debug, PartialEq)]
pub enum MotionModel<T> {
    /// Identity transition without noise.
    Static { dim: usize },
    /// `g` is `dim×dim`, `w` is `dim×2`, both row-major.
    Linear { dim: usize, g: Vec<T>, w: Vec<T>, sigma_u2: T },
}

impl<T: Real> MotionModel<T> {
    pub fn static_model(dim: usize) -> Self {
        MotionModel::Static { dim }
    }

    pub fn linear(dim: usize, g: Vec<T>, w: Vec<T>, sigma_u2: T) -> Result<Self> {
        if g.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: g.len() });
        }
        if w.len() != dim * 2 {
            return Err(Error::DimensionMismatch { expected: dim * 2, got: w.len() });
        }
        if !(sigma_u2 >= T::zero()) {
            return Err(Error::Config("driving-noise variance must be nonnegative".into()));
        }
        Ok(MotionModel::Linear { dim, g, w, sigma_u2 })
    }

    /// Near-constant velocity model on `(p_x, p_y, v_x, v_y)`.
    pub fn constant_velocity(sigma_u2: T) -> Self {
        let (z, o, h) = (T::zero(), T::one(), T::lit(0.5));
        let g = vec![o, z, o, z, z, o, z, o, z, z, o, z, z, z, z, o];
        let w = vec![h, z, z, h, o, z, z, o];
        MotionModel::Linear { dim: 4, g, w, sigma_u2 }
    }

    /// Position random walk on a 4-D state whose velocity stays put.
    /// Used for mobile agents that have not started moving yet.
    pub fn parked(sigma_u2: T) -> Self {
        let (z, o, h) = (T::zero(), T::one(), T::lit(0.5));
        let mut g = vec![z; 16];
        for i in 0..4 {
            g[i * 4 + i] = o;
        }
        let w = vec![h, z, z, h, z, z, z, z];
        MotionModel::Linear { dim: 4, g, w, sigma_u2 }
    }

    pub fn dim(&self) -> usize {
        match self {
            MotionModel::Static { dim } | MotionModel::Linear { dim, .. } => *dim,
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(self, MotionModel::Static { .. })
    }

    pub fn sigma_u2(&self) -> T {
        match self {
            MotionModel::Static { .. } => T::zero(),
            MotionModel::Linear { sigma_u2, .. } => *sigma_u2,
        }
    }

    /// Per-axis variance of the position increment caused by the driving noise.
    pub fn position_noise_variance(&self) -> T {
        match self {
            MotionModel::Static { .. } => T::zero(),
            MotionModel::Linear { w, sigma_u2, .. } => (w[0] * w[0] + w[1] * w[1]) * *sigma_u2,
        }
    }

    /// Writes `G·state + W·noise` into `out`. Slices must have length `dim`.
    pub fn apply(&self, state: &[T], noise: [T; 2], out: &mut [T]) {
        match self {
            MotionModel::Static { .. } => out.copy_from_slice(state),
            MotionModel::Linear { dim, g, w, .. } => {
                let d = *dim;
                for r in 0..d {
                    let row = &g[r * d..(r + 1) * d];
                    let mut acc = T::zero();
                    for c in 0..d {
                        acc = acc + row[c] * state[c];
                    }
                    out[r] = acc + w[r * 2] * noise[0] + w[r * 2 + 1] * noise[1];
                }
            }
        }
    }

    /// Draws a successor of `state` into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, state: &[T], out: &mut [T], rng: &mut R) {
        match self {
            MotionModel::Static { .. } => out.copy_from_slice(state),
            MotionModel::Linear { sigma_u2, .. } => {
                let s = sigma_u2.sqrt();
                let noise = [T::standard_normal(rng) * s, T::standard_normal(rng) * s];
                self.apply(state, noise, out);
            }
        }
    }

    fn check(&self, state: &EntityState<T>) -> Result<()> {
        if state.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: state.dim() });
        }
        Ok(())
    }
}

pub fn propagate_state<T: Real>(
    state: &EntityState<T>,
    model: &MotionModel<T>,
    noise: [T; 2],
) -> Result<EntityState<T>> {
    model.check(state)?;
    let s = state.to_vec();
    let mut out = vec![T::zero(); s.len()];
    model.apply(&s, noise, &mut out);
    EntityState::from_slice(&out)
}

pub fn sample_transition<T: Real, R: Rng + ?Sized>(
    state: &EntityState<T>,
    model: &MotionModel<T>,
    rng: &mut R,
) -> Result<EntityState<T>> {
    model.check(state)?;
    let s = state.to_vec();
    let mut out = vec![T::zero(); s.len()];
    model.sample_into(&s, &mut out, rng);
    EntityState::from_slice(&out)
}

/// Noise variance and per-agent sensing radii.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementModel<T> {
    pub sigma_v2: T,
    pub ranges: Vec<T>,
}

impl<T: Real> MeasurementModel<T> {
    pub fn new(sigma_v2: T, ranges: Vec<T>) -> Result<Self> {
        if !(sigma_v2 > T::zero()) {
            return Err(Error::Config("measurement noise variance must be positive".into()));
        }
        if ranges.iter().any(|r| !(*r >= T::zero())) {
            return Err(Error::Config("measurement ranges must be nonnegative".into()));
        }
        Ok(Self { sigma_v2, ranges })
    }
}

/// A noisy range `y_{l,k;n}` taken by `observer` of `target`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement<T> {
    pub observer: usize,
    pub target: EntityId,
    pub value: T,
    pub time: usize,
}

pub fn distance<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

pub fn measure_distance<T: Real>(x_l: &EntityState<T>, x_k: &EntityState<T>, noise: T) -> T {
    distance(x_l.position, x_k.position) + noise
}

pub fn likelihood<T: Real>(y: T, x_l: &EntityState<T>, x_k: &EntityState<T>, sigma_v2: T) -> T {
    RangeLikelihood::new(sigma_v2).eval(y, distance(x_l.position, x_k.position))
}

/// Gaussian range likelihood with its constants folded in.
#[derive(Clone, Copy, Debug)]
pub struct RangeLikelihood<T> {
    log_norm: T,
    inv_two_var: T,
    ln_floor: T,
}

impl<T: Real> RangeLikelihood<T> {
    pub fn new(sigma_v2: T) -> Self {
        let two = T::lit(2.0);
        Self {
            log_norm: -(two * T::PI() * sigma_v2).ln() / two,
            inv_two_var: T::one() / (two * sigma_v2),
            ln_floor: T::ln_floor(),
        }
    }

    /// Floored log-density of `y` given true distance `d`.
    #[inline]
    pub fn log_eval(&self, y: T, d: T) -> T {
        let r = y - d;
        let v = self.log_norm - r * r * self.inv_two_var;
        if v > self.ln_floor {
            v
        } else {
            self.ln_floor
        }
    }

    #[inline]
    pub fn eval(&self, y: T, d: T) -> T {
        let v = self.log_eval(y, d);
        if v <= self.ln_floor {
            T::LIKELIHOOD_FLOOR
        } else {
            v.exp().max(T::LIKELIHOOD_FLOOR)
        }
    }

    /// Log-density between two positions.
    #[inline]
    pub fn log_between(&self, y: T, a: &[T], b: &[T]) -> T {
        let dx = a[0] - b[0];
        let dy = a[1] - b[1];
        self.log_eval(y, (dx * dx + dy * dy).sqrt())
    }

    /// Log of the unfloored mode value.
    pub fn log_mode(&self) -> T {
        self.log_norm
    }

    pub fn inv_two_var(&self) -> T {
        self.inv_two_var
    }
}
