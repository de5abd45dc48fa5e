//! Seeded random streams.
//!
//! Every random draw in the crate comes from [`ChaCha20Rng`] seeded through
//! [`rng_for`]. Independent streams (replications, contours) derive their
//! seeds from a master seed with [`derive_seed`], a SplitMix64 mix of the
//! master seed and the stream index, so parallel and sequential runs draw
//! identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Generator name recorded in output metadata.
pub const GENERATOR: &str = "ChaCha20 (rand_chacha 0.9, seed_from_u64)";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of stream `stream` under master seed `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

pub fn rng_for(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}
