//! Distributed cooperative self-localization and tracking.
//!
//! Agents localize themselves and track noncooperative objects from range
//! measurements. Beliefs are particle sets; object beliefs are fused across
//! the network with consensus over particle weights.

pub mod bp;
pub mod consensus;
pub mod error;
pub mod model;
pub mod netsim;
pub mod particles;
pub mod rng;
pub mod scalar;
pub mod scenarios;
pub mod topology;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision aliases.
pub type ParticleSet64 = particles::ParticleSet<f64>;
pub type MotionModel64 = model::MotionModel<f64>;
pub type NetworkSim64 = netsim::NetworkSim<f64>;
pub type AlgorithmConfig64 = netsim::AlgorithmConfig<f64>;

/// Single-precision aliases.
pub type ParticleSet32 = particles::ParticleSet<f32>;
pub type MotionModel32 = model::MotionModel<f32>;
pub type NetworkSim32 = netsim::NetworkSim<f32>;
pub type AlgorithmConfig32 = netsim::AlgorithmConfig<f32>;
