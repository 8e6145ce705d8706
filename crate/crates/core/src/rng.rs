//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 keystream keyed by the experiment's base seed and
//! selected by a 64-bit stream index, so replication `r` consumes the same
//! uniforms no matter which worker runs it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stream index reserved for auxiliary estimation (noise covariances etc.).
pub const AUXILIARY_STREAM: u64 = u64::MAX;

pub fn stream(base_seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng
}
