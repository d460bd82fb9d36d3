//! Explicit seed derivation. Every randomized operation in the crate draws
//! from a generator built here, so results depend only on the seeds passed in.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One round of the splitmix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a base seed and a list of stream identifiers into one 64-bit seed.
pub fn derive_seed(seed: u64, streams: &[u64]) -> u64 {
    streams
        .iter()
        .fold(splitmix64(seed), |acc, &s| splitmix64(acc ^ splitmix64(s)))
}

pub fn rng_for(seed: u64, streams: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, streams))
}

// Stream tags keep independent uses of the same seed apart.
pub(crate) const STREAM_GOLD_CAPTION: u64 = 1;
pub(crate) const STREAM_SPLIT: u64 = 2;
pub(crate) const STREAM_TARGET: u64 = 3;
pub(crate) const STREAM_INIT: u64 = 4;
pub(crate) const STREAM_BATCH: u64 = 5;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_distinguished() {
        assert_ne!(derive_seed(7, &[1]), derive_seed(7, &[2]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
    }

    #[test]
    fn rng_is_reproducible() {
        let mut a = rng_for(3, &[9]);
        let mut b = rng_for(3, &[9]);
        for _ in 0..8 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }
}
