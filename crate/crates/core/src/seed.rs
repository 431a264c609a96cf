//! Seed derivation shared by every randomised component.
//!
//! Child seeds are derived with SplitMix64 and string keys are folded in with
//! FNV-1a, so derived streams are identical across runs and platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Seed for the `index`-th child stream of `master`.
pub fn derive(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

/// Seed keyed by a string label (e.g. a subject id).
pub fn derive_keyed(master: u64, key: &str, index: u64) -> u64 {
    derive(master ^ fnv1a(key.as_bytes()), index)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
