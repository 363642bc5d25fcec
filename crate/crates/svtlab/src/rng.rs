//! Seeded random streams.
//!
//! Everything stochastic in this crate draws from ChaCha8 streams derived
//! from a caller-supplied 64-bit seed. Pairing a seed with a stream index
//! yields independent generators for parallel work units (benchmark trials,
//! Monte Carlo chunks) whose combined output does not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Stream = ChaCha8Rng;

/// Root generator for a seed (stream 0).
pub fn root(seed: u64) -> Stream {
    stream(seed, 0)
}

/// Independent generator for work unit `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
