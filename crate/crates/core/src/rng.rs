//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by the
//! instance seed. Sub-tasks never share a stream: the seed selects the key and
//! the purpose selects the ChaCha stream id, so the factors of an instance do
//! not change when, say, the noise model changes. ChaCha output is specified
//! bit-for-bit, which makes instances reproducible across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tag selecting an independent stream for a given seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    LeftFactor = 1,
    RightFactor = 2,
    Pattern = 3,
    Noise = 4,
    Lanczos = 5,
    Holdout = 6,
    Diagnostics = 7,
    /// Second attempt of a sampling step that produced an empty result.
    PatternRetry = 8,
}

pub fn stream(seed: u64, purpose: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

/// Seed for trial `index` of an experiment whose base seed is `base`.
pub fn trial_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
