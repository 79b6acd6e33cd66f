//! Seeded randomness.
//!
//! Every random stream in the crate is a [`ChaCha8Rng`] whose seed is derived
//! from a master seed and a path of integer labels with splitmix64, so that
//! independent jobs (episodes, tasks, strategies) never share a stream and
//! results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// One splitmix64 step.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `label` under `master`.
pub fn derive_seed(master: u64, label: u64) -> u64 {
    splitmix64(splitmix64(master) ^ label.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn derive_path(master: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(master, |s, &l| derive_seed(s, l))
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn child(master: u64, labels: &[u64]) -> Rng {
    seeded(derive_path(master, labels))
}
