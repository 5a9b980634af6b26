//! Seeded random streams. Every stochastic component receives an explicit
//! stream; independent work items get their own stream keyed by index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream `index` of the family identified by `(seed, domain)`.
pub fn stream(seed: u64, domain: u64, index: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(mix(seed, domain));
    rng.set_stream(index);
    rng
}

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

// splitmix64 finalizer over the pair
fn mix(seed: u64, domain: u64) -> u64 {
    let mut z = seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream domains used across the crate.
pub mod domain {
    pub const INIT: u64 = 1;
    pub const SYNTH: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const VALID: u64 = 5;
    pub const SESSION: u64 = 6;
    pub const SHUFFLE: u64 = 7;
    pub const ESTIMATOR: u64 = 8;
}
