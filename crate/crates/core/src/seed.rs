//! Deterministic seed derivation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a sequence of words.
pub fn derive(base: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(splitmix(base), |acc, w| splitmix(acc ^ splitmix(*w)))
}

/// Seed for a box, a pure function of its coordinates and a stream tag.
pub fn for_box(base: u64, lo: &[f64], hi: &[f64], stream: u64) -> u64 {
    let words: Vec<u64> = lo
        .iter()
        .chain(hi)
        .map(|v| v.to_bits())
        .chain(std::iter::once(stream))
        .collect();
    derive(base, &words)
}
