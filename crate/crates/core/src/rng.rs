//! Seed derivation for independent, schedule-free random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream constants so that different consumers of one user seed never
/// share a stream.
pub mod stream {
    pub const PHANTOM: u64 = 1;
    pub const DEFORMATION: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const VOLUME_INIT: u64 = 5;
    pub const WARP_INIT: u64 = 6;
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    mix(mix(seed ^ mix(stream)) ^ index)
}

/// Generator for item `index` of `stream`, independent of call order.
pub fn stream_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index))
}
