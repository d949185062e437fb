//! Seed derivation for independent, reproducible runs.
//!
//! Run `i` of an experiment with master seed `m` uses
//! `split_seed(m, i) = mix(m ^ mix(i + 0x9E3779B97F4A7C15))`, where `mix` is
//! the SplitMix64 finalizer. The derived seed depends only on `(m, i)`, so it
//! is the same for every operator variant and every worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn split_seed(master: u64, index: u64) -> u64 {
    mix(master ^ mix(index.wrapping_add(GOLDEN)))
}

/// Independent ChaCha stream `stream` for `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
