//! Seed derivation. Every random stage draws from a ChaCha8 stream keyed by
//! the root seed plus a stage tag, so re-running one stage in isolation
//! reproduces the numbers it produced inside a full pipeline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stage tags used by the pipeline.
pub mod stage {
    pub const NOISE: u64 = 1;
    pub const SAMPLER: u64 = 2;
    pub const HYPERPARAMS: u64 = 3;
    pub const BOOTSTRAP: u64 = 4;
    pub const CHAINS: u64 = 5;
}

/// Generator for `(seed, stream)`.
pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Mixes `tag` into `seed` (splitmix64 finalizer).
pub fn derive(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
