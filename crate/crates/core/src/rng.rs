//! Deterministic seed derivation and uniform sampling helpers.
//!
//! All randomness in the simulator flows from one master seed through a
//! tree of named derivations (command → cell → realization → trial →
//! stream role). Streams are ChaCha12 generators; the helpers below avoid
//! `rand`'s distribution code so draws stay bit-stable across dependency
//! upgrades and platforms.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

/// A node in the seed-derivation tree. Children are derived from the
/// parent state by mixing a role label and an index, so any (label, index)
/// path from the master seed names a unique, reproducible stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    state: u64,
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 finalizer; good avalanche for cheap key mixing.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hash_label(label: &str) -> u64 {
    // FNV-1a over the label bytes, then finalized.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in label.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix(h)
}

impl SeedTree {
    pub fn from_master(seed: u64) -> Self {
        SeedTree {
            state: mix(seed.wrapping_add(GOLDEN_GAMMA)),
        }
    }

    /// Derive the child stream for `(label, index)`.
    pub fn child(&self, label: &str, index: u64) -> SeedTree {
        let mixed = self
            .state
            .wrapping_add(hash_label(label))
            .wrapping_add(mix(index.wrapping_add(GOLDEN_GAMMA)));
        SeedTree { state: mix(mixed) }
    }

    pub fn seed(&self) -> u64 {
        self.state
    }

    /// Materialize this node as a generator.
    pub fn rng(&self) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(self.state)
    }
}

/// Uniform double in [0, 1) with 53 bits of precision.
pub fn uniform_f64<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform index in [0, n). Widening-multiply mapping: deterministic and
/// unbiased enough for simulation use (bias < 2^-53 for n ≪ 2^32).
pub fn uniform_index<R: RngCore>(rng: &mut R, n: usize) -> usize {
    debug_assert!(n > 0);
    (((rng.next_u64() as u128) * (n as u128)) >> 64) as usize
}

/// Bernoulli draw with success probability `p`.
pub fn bernoulli<R: RngCore>(rng: &mut R, p: f64) -> bool {
    uniform_f64(rng) < p
}
