//! Seeded random number generation.
//!
//! Every stochastic routine in the crate draws from [`DpmRng`], which is
//! ChaCha8 (the `rand_chacha` stream cipher generator with 8 rounds) seeded via
//! `SeedableRng::seed_from_u64`. Sub-streams for tree nodes and Monte Carlo
//! trials are obtained with [`derive_seed`], a SplitMix64 chain over the master
//! seed and a path of integers, so results never depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type DpmRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> DpmRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed from `master` and a path such as a tree-node
/// address or a trial index.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix(master), |acc, &step| mix(acc ^ mix(step.wrapping_add(0xA5A5_A5A5))))
}

pub fn derived_rng(master: u64, path: &[u64]) -> DpmRng {
    rng_from_seed(derive_seed(master, path))
}
