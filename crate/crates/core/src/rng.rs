//! Deterministic RNG substreams.
//!
//! Every replication, chunk or batch draws from its own ChaCha stream keyed by
//! `(seed, stream)`, so results do not depend on how work is scheduled.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream tags used to keep independent sources apart under one master seed.
pub mod tag {
    pub const NOISE: u64 = 0x6e6f_6973;
    pub const COVARIATE: u64 = 0x636f_7661;
    pub const PARTICLES: u64 = 0x7061_7274;
    pub const REPLICATION: u64 = 0x7265_706c;
    pub const CONSTANT: u64 = 0x636f_6e73;
    pub const NEXT: u64 = 0x6e65_7874;
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix(seed ^ mix(tag))
}

/// Independent stream `stream` under `seed`.
pub fn substream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws a fresh seed from an existing generator.
pub fn fork_seed<R: RngCore + ?Sized>(rng: &mut R) -> u64 {
    rng.next_u64()
}
