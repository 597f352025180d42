//! Deterministic seed derivation.
//!
//! Every random stream in the simulator is a ChaCha8 generator keyed by a seed
//! derived from the experiment seed plus a tuple of tags (task, round, client,
//! purpose). Streams never share state, so results do not depend on the order
//! in which clients are executed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream purposes, mixed into derived seeds so that different consumers of the
/// same `(task, round, client)` coordinates draw independent numbers.
pub mod purpose {
    pub const INIT: u64 = 1;
    pub const HEAD: u64 = 2;
    pub const CLIENT_SAMPLING: u64 = 3;
    pub const BATCHES: u64 = 4;
    pub const ACTIVATION_SAMPLE: u64 = 5;
    pub const RSVD: u64 = 6;
    pub const PARTITION: u64 = 7;
    pub const DATA: u64 = 8;
    pub const VOTERS: u64 = 9;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn rng_for(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}
