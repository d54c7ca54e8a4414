//! Seed derivation.
//!
//! Every random stream in the crate is a [`ChaCha8Rng`] seeded from a `u64`.
//! Child seeds are derived with [`derive_seed`], which applies the SplitMix64
//! finalizer to the parent seed and the child index. The mapping is part of
//! the replay contract: changing it changes every stored result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `hash(base, index)`: the seed of child stream `index` under `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base) ^ index.wrapping_mul(GOLDEN_GAMMA))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Named sub-streams used inside one replication.
pub(crate) mod stream {
    pub const INITIAL_STATE: u64 = 1;
    pub const DRIVING_NOISE: u64 = 2;
    pub const TARGET_SAMPLE: u64 = 3;
    pub const PAST_NOISE: u64 = 4;
}
