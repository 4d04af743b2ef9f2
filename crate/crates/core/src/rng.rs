//! Named random streams derived from one root seed.
//!
//! Each pipeline stage draws from its own stream, so reseeding or reordering
//! one stage never perturbs the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StageRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed for stream `name` with sub-index `index` under `root`.
pub fn derive_seed(root: u64, name: &str, index: u64) -> u64 {
    splitmix(splitmix(root ^ fnv1a(name)) ^ splitmix(index.wrapping_add(1)))
}

pub fn stream(root: u64, name: &str, index: u64) -> StageRng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, name, index))
}
