//! Keyed random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose key is a
//! pure function of the user seed and a few integer coordinates (row, trial,
//! pair, ...). Work can therefore be split across threads in any order
//! without changing a single bit of the output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// Domain tags so that streams used for different purposes never collide.
pub(crate) const TAG_SIGNS: u64 = 0x5349_474e;
pub(crate) const TAG_NAIVE: u64 = 0x4e41_4956;
pub(crate) const TAG_SWAPS: u64 = 0x5357_4150;
pub(crate) const TAG_BOOT: u64 = 0x424f_4f54;
pub(crate) const TAG_ABLATE: u64 = 0x4142_4c54;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a list of coordinates into a single 64-bit key.
pub fn derive_seed(seed: u64, coords: &[u64]) -> u64 {
    coords.iter().fold(splitmix64(seed), |acc, &c| {
        splitmix64(acc.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ c)
    })
}

/// A ChaCha8 stream keyed on `(seed, coords)`.
pub fn keyed_rng(seed: u64, coords: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, coords))
}
