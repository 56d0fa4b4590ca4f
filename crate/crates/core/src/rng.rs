//! Seed derivation.
//!
//! Every stochastic component draws from a `ChaCha8Rng` whose seed is
//! derived from the master seed with SplitMix64, so results never depend on
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One SplitMix64 finaliser step.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed: `splitmix64(master ^ splitmix64(stream))`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream))
}

/// Stream tags keep unrelated consumers of the same master seed apart.
pub mod stream {
    pub const SCENE: u64 = 0x5343_454E_0000_0000;
    pub const ENV: u64 = 0x454E_5600_0000_0000;
    pub const OPERATORS: u64 = 0x4F50_5300_0000_0000;
    pub const NOISE: u64 = 0x4E4F_4953_0000_0000;
    pub const SAMPLER: u64 = 0x5341_4D50_0000_0000;
    pub const INIT: u64 = 0x494E_4954_0000_0000;
    pub const AUGMENT: u64 = 0x4155_474D_0000_0000;
    pub const SPLIT: u64 = 0x5350_4C54_0000_0000;
}

pub fn rng_for(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(master, stream), index))
}
