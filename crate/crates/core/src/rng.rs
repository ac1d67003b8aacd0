//! Seeded random streams.
//!
//! Every consumer draws from a ChaCha8 generator built from a 64-bit seed and
//! a 64-bit stream id. [`stream_id`] derives the id from a label (for example
//! a grid point's parameters) so that adding a new consumer never shifts the
//! draws of an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Build the generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// FNV-1a hash of a label; stable across platforms and releases.
pub fn stream_id(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
