//! Named random sub-streams derived from a single user seed.
//!
//! Every consumer of randomness asks for `stream(seed, name, index)`, so the
//! draws a component sees do not depend on how many other components ran
//! before it or on how work was split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const PLAN: &str = "plan";
pub const WALK: &str = "walk";
pub const DATA: &str = "data";
pub const REPEAT: &str = "repeat";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed for sub-stream `index` of component `name`.
pub fn derive_seed(seed: u64, name: &str, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ fnv1a(name)) ^ splitmix64(index.wrapping_add(0x5851_f42d)))
}

pub fn stream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, name, index))
}
