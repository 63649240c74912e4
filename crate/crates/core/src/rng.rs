//! Reproducible random streams.
//!
//! Every trajectory owns a ChaCha8 generator. ChaCha is counter based, so a
//! stream is fully determined by its 64-bit seed. Child streams (ensemble
//! runs, experiment pairs) get their seed from [`derive_seed`], which mixes
//! the master seed with the stream index through two SplitMix64 finalizer
//! rounds. The result depends only on `(seed, index)`, never on the order in
//! which streams are created or consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of child stream `index` under master `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(seed: u64, index: u64) -> SimRng {
    rng_from_seed(derive_seed(seed, index))
}
