//! Derivation of independent deterministic RNG streams.
//!
//! Every stochastic step in the simulator draws from its own ChaCha stream,
//! seeded from the experiment seed plus a list of integer tags (client id,
//! round, purpose). Streams are stable across platforms and runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; decorrelates structured tag values.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed and a stream label.
pub fn derive(base: u64, tags: &[u64]) -> u64 {
    let mut s = mix(base);
    for &t in tags {
        s = mix(s ^ mix(t));
    }
    s
}

/// Seeded RNG used throughout the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
