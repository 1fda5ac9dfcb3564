//! Seeded random streams.
//!
//! Every Monte-Carlo replica draws from its own ChaCha8 stream, selected by
//! `(seed, stream)`. Replicas therefore produce the same numbers whatever the
//! thread count or scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identifier of the generator and the seeding scheme, recorded in outputs.
pub const GENERATOR: &str = "chacha8/seed_from_u64+stream/v1";

pub type StreamRng = ChaCha8Rng;

/// Stream reserved for single-stream uses such as [`crate::RandomSystem::sample_word`].
pub const MAIN_STREAM: u64 = 0;

/// Independent substream `stream` of the generator seeded with `seed`.
pub fn substream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
