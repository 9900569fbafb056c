//! Seed handling.
//!
//! Every random quantity is drawn from a [`ChaCha8Rng`]. Independent streams
//! are derived from a parent seed by selecting a ChaCha stream id and taking
//! the first output word, so a `(seed, stream)` pair always maps to the same
//! child seed regardless of evaluation order or thread count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream ids used when splitting a Monte Carlo trial seed.
pub mod stream {
    pub const SIGNAL: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const SOLVER: u64 = 3;
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Child seed for `stream` under `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Seed of the `index`-th Monte Carlo trial. Streams `0..2^32` are reserved
/// for trials so they never collide with the fixed sub-streams above.
pub fn trial_seed(base_seed: u64, index: u64) -> u64 {
    derive_seed(base_seed, (1 << 32) + index)
}
