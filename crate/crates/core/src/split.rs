//! Seeded index partitions and seed derivation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{KarError, Result};

/// Seeded uniform permutation of `0..n` cut into consecutive blocks of the
/// requested sizes.
pub fn random_split(n: usize, sizes: &[usize], seed: u64) -> Result<Vec<Vec<usize>>> {
    let total: usize = sizes.iter().sum();
    if total != n {
        return Err(KarError::invalid(format!(
            "split sizes {sizes:?} sum to {total}, expected {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut blocks = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &size in sizes {
        blocks.push(order[start..start + size].to_vec());
        start += size;
    }
    Ok(blocks)
}

/// SplitMix64 finalizer; decorrelates `(base, stream)` pairs into seeds.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
