//! Named seed derivation.
//!
//! Every random stream in a run is derived from a base seed and a tag so that
//! variants share common random numbers wherever their code paths coincide.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(base: u64, tag: u64) -> u64 {
    mix(mix(base) ^ tag.rotate_left(17))
}

pub fn rng_from(base: u64, tag: u64) -> Rng {
    Rng::seed_from_u64(derive(base, tag))
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Tags for the named streams.
pub mod tag {
    pub const OPTIMIZER: u64 = 1;
    pub const DETECTION: u64 = 2;
    pub const FLOW: u64 = 3;
    pub const EVALUATION: u64 = 4;
    pub const STREAM: u64 = 5;
    pub const PRETRAIN: u64 = 6;
    pub const SCHEDULE: u64 = 7;
}
