//! Seeded, stream-separated random number generation.
//!
//! Every run derives its generators from a `u64` seed plus a stream id, so
//! independent consumers (the optimizer loop, the output-iterate draw,
//! Monte Carlo chunks) never share a sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ZoRng = ChaCha8Rng;

pub const STREAM_MAIN: u64 = 0;
pub const STREAM_OUTPUT: u64 = 1;

pub fn seeded(seed: u64) -> ZoRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, stream: u64) -> ZoRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
