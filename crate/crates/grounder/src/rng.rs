//! Seed derivation and the Gaussian noise source used for query variants.
//!
//! Every random stream in the crate is a ChaCha generator keyed by a
//! `(seed, label, indices...)` mix, so independent stages (parameter init,
//! shuffling, variant noise, clustering) never share a stream and per-item
//! streams can be handed to parallel workers without losing determinism.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const LABEL_INIT: u64 = 0x01;
pub const LABEL_SHUFFLE: u64 = 0x02;
pub const LABEL_NOISE: u64 = 0x03;
pub const LABEL_KMEANS: u64 = 0x04;
pub const LABEL_GEN: u64 = 0x05;
pub const LABEL_SPLIT: u64 = 0x06;
pub const LABEL_PERTURB: u64 = 0x07;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Mix a base seed with a sequence of stream identifiers.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut s = splitmix64(seed);
    for &p in parts {
        s = splitmix64(s ^ splitmix64(p));
    }
    s
}

pub fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}

/// Stream of standard-normal draws backing the reparameterized sampling.
pub struct NoiseSource {
    rng: ChaCha8Rng,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        NoiseSource {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn from_stream(seed: u64, parts: &[u64]) -> Self {
        NoiseSource {
            rng: stream(seed, parts),
        }
    }

    /// Independent child stream; safe to hand to a parallel worker.
    pub fn derive(&self, parts: &[u64]) -> NoiseSource {
        // key the child off the parent's seed material, not its position
        let mut rng = self.rng.clone();
        let base: u64 = rng.gen();
        NoiseSource {
            rng: ChaCha8Rng::seed_from_u64(derive_seed(base, parts)),
        }
    }

    /// `n` draws from N(0, sigma^2).
    pub fn normal_vec(&mut self, n: usize, sigma: f64) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let z: f64 = self.rng.sample(StandardNormal);
                z * sigma
            })
            .collect()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..hi)
    }
}
