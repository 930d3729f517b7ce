//! Seed derivation.
//!
//! Each consumer of randomness gets its own ChaCha8 stream keyed by the
//! experiment seed plus a tag path, e.g. `[CLIENT_TRAIN, round, client]`.
//! Streams never share state, so clients can train in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const INIT: u64 = 1;
pub const SAMPLE: u64 = 2;
pub const CLIENT_TRAIN: u64 = 3;
pub const CLIENT_PURGE: u64 = 4;
pub const INIT_CLIENT: u64 = 5;
pub const INIT_BATCH: u64 = 6;
pub const PARTITION: u64 = 7;
pub const SUBSAMPLE: u64 = 8;
pub const SYNTHETIC: u64 = 9;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &tag| splitmix64(acc ^ splitmix64(tag)))
}

pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}
