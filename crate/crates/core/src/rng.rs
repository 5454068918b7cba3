//! Seeded, portable randomness.
//!
//! All sampling goes through [`MemRng`] seeded with [`rng_from_seed`], so a
//! `(seed, inputs)` pair fixes every draw on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type MemRng = ChaCha8Rng;

/// Identifier recorded in run manifests.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9, SeedableRng::seed_from_u64)";

pub fn rng_from_seed(seed: u64) -> MemRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for one `(n, trial)` cell of an experiment:
/// `seed ^ splitmix64(splitmix64(n) ^ trial)`.
///
/// Depends only on the cell coordinates, never on execution order.
pub fn derive_seed(seed: u64, n: u64, trial: u64) -> u64 {
    seed ^ splitmix64(splitmix64(n) ^ trial)
}
