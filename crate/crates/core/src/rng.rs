//! Named seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from
//! `derive_seed(base, path)`, where `path` is a short list of integers
//! naming the stream (cell index, trial index, purpose tag). The mixing
//! function folds each path element into a SplitMix64 state:
//!
//! ```text
//! h = base
//! for x in path: h = splitmix64(h ^ splitmix64(x + 0x9E3779B97F4A7C15))
//! ```
//!
//! so any sub-result can be reproduced from the base seed alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags used across the crate.
pub mod tag {
    pub const GRAPH: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const INIT: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const ALPHA: u64 = 5;
    pub const PRUNE: u64 = 6;
    pub const PATTERNS: u64 = 7;
    pub const IMPORTANT: u64 = 8;
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(base, |h, &x| {
        splitmix64(h ^ splitmix64(x.wrapping_add(0x9E37_79B9_7F4A_7C15)))
    })
}

pub fn stream(base: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(base, path))
}

/// Uniform value in [0, 1) computed from a hash, for stateless per-item
/// coin flips (e.g. membership in a random node subset).
pub fn unit_hash(base: u64, item: u64) -> f64 {
    (derive_seed(base, &[item]) >> 11) as f64 / (1u64 << 53) as f64
}
