//! Seeded random streams.
//!
//! A run has one base seed. Independent work items (replicates, bootstrap
//! resamples, Monte-Carlo chunks) draw from ChaCha8 stream number `stream`
//! of that seed, so results do not depend on scheduling or thread count.
//! Nested indices are packed as `(outer << 32) | inner`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn nested_stream(outer: u64, inner: u64) -> u64 {
    (outer << 32) | (inner & 0xffff_ffff)
}
