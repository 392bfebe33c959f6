//! Deterministic random streams.
//!
//! Every stochastic operation draws from a [`SeedStream`]. A stream is a
//! 64-bit seed; [`SeedStream::rng`] turns it into a ChaCha8 generator via
//! `ChaCha8Rng::seed_from_u64`, whose output is fixed by the ChaCha8
//! algorithm and the PCG32-based seed expansion of `rand_core`, so sequences
//! do not change across versions of this crate.
//!
//! Splitting rule: child `k` of a stream with seed `s` has seed
//! `splitmix64(s ^ splitmix64(k ^ 0x6a09e667f3bcc909))`. Children with
//! distinct labels get unrelated keys, which ChaCha8 turns into
//! independent streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const SPLIT_SALT: u64 = 0x6a09_e667_f3bc_c909;

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream(u64);

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn seed(self) -> u64 {
        self.0
    }

    pub fn child(self, label: u64) -> Self {
        Self(splitmix64(self.0 ^ splitmix64(label ^ SPLIT_SALT)))
    }

    /// Child keyed by a string label, for readability at call sites.
    pub fn named(self, label: &str) -> Self {
        // FNV-1a, stable across platforms.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        self.child(h)
    }

    pub fn rng(self) -> Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

pub fn seeded_rng(seed: u64) -> Rng {
    SeedStream::new(seed).rng()
}
