//! Seed derivation for independent deterministic RNG streams.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 finalizer; decorrelates nearby (seed, stream) pairs.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic RNG for a named substream of a top-level seed. Streams with
/// different ids are independent regardless of how much each one consumes.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(mix(seed ^ mix(stream)))
}
