//! Seed derivation.
//!
//! Experiments carry a single root seed. Every randomized step draws from its
//! own stream, seeded by hashing the root seed together with a fixed label, so
//! results do not depend on the order in which steps run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed for the stream named `label` under `root`.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(root ^ splitmix64(h))
}

/// A generator seeded directly from `seed`.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A generator for the stream named `label` under `root`.
pub fn stream(root: u64, label: &str) -> ChaCha8Rng {
    rng_from_seed(derive_seed(root, label))
}
