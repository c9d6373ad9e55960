//! Reproducible per-path random streams.
//!
//! Every path is driven by a ChaCha8 generator seeded with `seed_from_u64(seed)`
//! and switched to stream number `path_index`. ChaCha streams are disjoint
//! 2^64-block sequences of one keyed cipher, so paths with different indices are
//! independent and any path can be regenerated alone, in any order, on any thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}
