//! Quenched deterministic randomness.
//!
//! Every random decision in the lattice models is a pure function of a
//! 64-bit master seed and an integer key (edge identity, replica index,
//! block coordinates, ...). Keys are absorbed word by word through the
//! SplitMix64 finaliser, which gives full avalanche per word and keeps
//! both endpoints of an edge in agreement without storing any state.

use rand::rngs::SmallRng;
use rand::SeedableRng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Coin families. Keeps distinct uses of the master seed independent.
pub mod domain {
    pub const HORIZONTAL: u64 = 0x68;
    pub const VERTICAL: u64 = 0x76;
    pub const REPLICA: u64 = 0x72;
    pub const BLOCK: u64 = 0x62;
    pub const OMEGA: u64 = 0x6f;
    pub const STREAM: u64 = 0x73;
}

/// SplitMix64 finaliser.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Keyed counter-based hash of `(seed, words)`.
#[inline]
pub fn keyed_u64(seed: u64, words: &[u64]) -> u64 {
    let mut acc = mix64(seed ^ GOLDEN);
    for (i, &w) in words.iter().enumerate() {
        acc = mix64(acc ^ mix64(w.wrapping_add((i as u64 + 1).wrapping_mul(GOLDEN))));
    }
    acc
}

/// Map a u64 to the unit interval `[0, 1)` with 53 random bits.
#[inline]
pub fn unit_f64(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in `[0, 1)` keyed by `(seed, words)`.
#[inline]
pub fn keyed_unit(seed: u64, words: &[u64]) -> f64 {
    unit_f64(keyed_u64(seed, words))
}

/// Derive an independent RNG stream for a tagged sub-task.
pub fn stream(seed: u64, tags: &[u64]) -> SmallRng {
    SmallRng::seed_from_u64(keyed_u64(seed, tags))
}

/// Derive the per-replica sub-seed used by keyed coins inside a replica.
pub fn replica_seed(seed: u64, replica: u64) -> u64 {
    keyed_u64(seed, &[domain::REPLICA, replica])
}
