//! Keyed random streams. Agents that derive a stream from the same key draw
//! the same numbers without exchanging anything.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Part of the key so that streams never collide.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Purpose {
    Prior,
    Hyperprior,
    Prediction,
    Resample,
    ExtrinsicResample,
    AltProposal,
    Motion,
    TruthMotion,
    MeasurementNoise,
    Placement,
    Topology,
    Baseline,
}

impl Purpose {
    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

/// `(entity, time, iteration, purpose, peer)`. `peer` separates per-edge streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub entity: u64,
    pub time: u64,
    pub iteration: u64,
    pub purpose: Purpose,
    pub peer: u64,
}

impl StreamKey {
    pub fn new(entity: usize, time: usize, iteration: usize, purpose: Purpose) -> Self {
        Self { entity: entity as u64, time: time as u64, iteration: iteration as u64, purpose, peer: 0 }
    }

    pub fn with_peer(mut self, peer: usize) -> Self {
        self.peer = peer as u64 + 1;
        self
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator derived from a master seed and a key.
#[derive(Clone, Debug)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, key: StreamKey) -> Self {
        let fields = [seed, key.entity, key.time, key.iteration, key.purpose.tag(), key.peer];
        let mut h = 0x6A09_E667_F3BC_C908u64;
        for f in fields {
            h = splitmix(h ^ f);
        }
        let mut bytes = [0u8; 32];
        for (i, chunk) in bytes.chunks_mut(8).enumerate() {
            h = splitmix(h.wrapping_add(i as u64));
            chunk.copy_from_slice(&h.to_le_bytes());
        }
        Self { inner: ChaCha8Rng::from_seed(bytes) }
    }
}

/// Seed of run `run` under `master`.
pub fn run_seed(master: u64, run: usize) -> u64 {
    splitmix(splitmix(master) ^ (run as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
