//! Named random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the run seed, with the stream
//! kind and an index packed into ChaCha's 64-bit stream id.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Positions = 1,
    Edges = 2,
    TieBreak = 3,
    InitialSet = 4,
    Replicate = 5,
}

pub fn stream(seed: u64, kind: Stream, index: u64) -> ChaCha8Rng {
    debug_assert!(index < 1 << 56);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((kind as u64) << 56) | index);
    rng
}
