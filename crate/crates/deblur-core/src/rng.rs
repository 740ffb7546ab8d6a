//! Seedable, splittable random number generation.
//!
//! All randomness in the crate flows through [`DeblurRng`], a ChaCha12
//! stream cipher generator. Derived seeds are produced by a SplitMix64
//! mix of the parent seed and a stream tag, so independent consumers
//! (text, noise, crops, batch shuffling) can be split off a single master
//! seed without correlation and reproduced on any platform.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Identifier of the generator algorithm, for reproducibility notes.
pub const RNG_ALGORITHM: &str = "chacha12";

pub type DeblurRng = ChaCha12Rng;

/// Construct the generator for a given seed.
pub fn rng_from_seed(seed: u64) -> DeblurRng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Derive an independent child seed from a parent seed and a stream tag.
pub fn derive_seed(parent: u64, tag: u64) -> u64 {
    // SplitMix64 finalizer over the combined value.
    let mut z = parent
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(tag)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
