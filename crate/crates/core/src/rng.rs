//! Deterministic randomness: a keyed counter-based hash for environment sites
//! and per-stream ChaCha generators for walk steps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine two words into a well-mixed key.
#[inline]
pub fn mix(a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(a) ^ b.wrapping_mul(0xd6e8_feb8_6659_fd93).rotate_left(17))
}

/// Keyed hash of lattice coordinates.
#[inline]
pub fn site_hash(seed: u64, coords: &[i64]) -> u64 {
    let mut h = splitmix64(seed ^ 0x5851_f42d_4c95_7f2d);
    for &c in coords {
        h = splitmix64(h ^ (c as u64).wrapping_mul(0xff51_afd7_ed55_8ccd));
    }
    h
}

/// Uniform double in `[0, 1)` from the top 53 bits.
#[inline]
pub fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Step generator for one walk: independent of scheduling, a pure function
/// of `(master_seed, stream_id)`.
pub fn walk_rng(master_seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(master_seed, 0x57a1_4e5e_ed00_0001));
    rng.set_stream(stream_id);
    rng
}

/// Environment seed for the `index`-th independently sampled environment.
pub fn env_seed(master_seed: u64, index: u64) -> u64 {
    mix(mix(master_seed, 0xe1e1_e1e1_0000_0002), index)
}
