//! Reproducible random streams.
//!
//! Every random quantity in the crate is drawn from a [`ChaCha8Rng`] seeded
//! with a 64-bit seed; standard normal variates come from the ziggurat
//! sampler of `rand_distr::StandardNormal`. Seeds for sub-streams (one per
//! client, per draw, per mask pair, ...) are derived with the SplitMix64
//! finalizer so that neighbouring integers give unrelated streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a sub-stream seed from a base seed and a path of stream tags.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &tag| splitmix64(acc ^ splitmix64(tag.wrapping_add(0x632b_e59b_d9b4_e019))))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fills `out` with i.i.d. standard normal variates from the stream `seed`.
pub fn fill_standard_normal(seed: u64, out: &mut [f64]) {
    let mut rng = rng_from_seed(seed);
    for x in out.iter_mut() {
        *x = StandardNormal.sample(&mut rng);
    }
}

// Stream tags, kept distinct so that independent quantities never share a stream.
pub(crate) const TAG_PHI: u64 = 1;
pub(crate) const TAG_MASK: u64 = 2;
pub(crate) const TAG_U0: u64 = 3;
pub(crate) const TAG_SIGNAL_LEFT: u64 = 4;
pub(crate) const TAG_SIGNAL_RIGHT: u64 = 5;
pub(crate) const TAG_NOISE: u64 = 6;
pub(crate) const TAG_SHUFFLE: u64 = 7;
