//! Deterministic seed derivation.
//!
//! Every random decision in the pipeline flows from one master seed through
//! [`derive`], which mixes a list of string parts into a child seed. The
//! mixing is a fixed FNV-1a / splitmix64 combination, so derived seeds are
//! stable across platforms and releases; nothing anywhere seeds from the
//! wall clock.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and a path of string parts.
///
/// Different paths give statistically independent streams; the same path
/// always gives the same seed.
pub fn derive(master: u64, parts: &[&str]) -> u64 {
    let mut h = FNV_OFFSET ^ splitmix64(master);
    for part in parts {
        for &b in part.as_bytes() {
            h = (h ^ b as u64).wrapping_mul(FNV_PRIME);
        }
        // Separator so ["ab","c"] != ["a","bc"].
        h = (h ^ 0xff).wrapping_mul(FNV_PRIME);
    }
    splitmix64(h)
}

/// A seeded RNG stream. ChaCha keeps the stream identical on every platform.
pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}
