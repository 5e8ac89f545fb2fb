//! Seed derivation and the random generators used throughout the crate.
//!
//! Every random stream is a `ChaCha8Rng`. Streams are keyed by hashing an
//! experiment seed together with a list of integer tags (image id, block,
//! step, purpose) through the SplitMix64 finalizer, so adding or removing
//! unrelated streams never reshuffles existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Purpose tags mixed into derived seeds.
pub mod tag {
    pub const STRIDE_NOISE: u64 = 0x6e6f_6973;
    pub const STRIDE_PCA: u64 = 0x7063_6131;
    pub const INPUT_NOISE: u64 = 0x696e_7074;
    pub const LATENT: u64 = 0x6c61_7465;
    pub const REFERENCE: u64 = 0x7265_6665;
    pub const KID_BLOCKS: u64 = 0x6b69_6462;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `tags` into `seed`: `s <- splitmix64(rotl(s, 23) ^ splitmix64(tag))`
/// per tag, starting from `splitmix64(seed)`.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(seed), |acc, &t| splitmix64(acc.rotate_left(23) ^ splitmix64(t)))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` standard-normal draws from the stream keyed by `seed`.
pub fn standard_normals(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = rng_from(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}
