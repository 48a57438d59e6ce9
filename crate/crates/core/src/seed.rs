//! Counter-based seed derivation.
//!
//! Every consumer of randomness (generator, trial pool draw, GP sampler, ...)
//! derives its own stream from the root seed and a path of integers, so adding
//! a consumer never shifts the numbers any other consumer sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const TAG_SYNTH: u64 = 0x5359_4e54;
pub const TAG_POOL: u64 = 0x504f_4f4c;
pub const TAG_TRAIN: u64 = 0x5452_4149;
pub const TAG_SH: u64 = 0x5348_5255;
pub const TAG_GP: u64 = 0x4750_5350;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `root` and an integer path.
pub fn derive(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(root), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_at(root: u64, path: &[u64]) -> Rng {
    rng(derive(root, path))
}
