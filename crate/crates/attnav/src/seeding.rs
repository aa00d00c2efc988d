//! Deterministic seed streams.
//!
//! One user-facing seed governs every random decision in the crate. Each
//! purpose (scene generation, parameter init, task sampling, action
//! sampling, …) derives its own independent stream by hashing a tag string
//! into the seed, so adding a consumer never shifts another's stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; decorrelates nearby inputs.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over the tag bytes.
fn tag_hash(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in tag.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives the sub-seed for `tag` under the master `seed`.
pub fn derive(seed: u64, tag: &str) -> u64 {
    mix(seed ^ tag_hash(tag))
}

/// Derives the sub-seed for the `index`-th consumer of a tagged stream.
pub fn derive_indexed(seed: u64, tag: &str, index: u64) -> u64 {
    mix(derive(seed, tag) ^ mix(index))
}

/// Portable, seedable RNG used everywhere randomness is needed.
pub fn rng_for(seed: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tag))
}

pub fn rng_for_indexed(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_indexed(seed, tag, index))
}
