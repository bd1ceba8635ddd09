//! Deterministic seed derivation.
//!
//! Every consumer of randomness (data generation, weight init, epoch
//! shuffles, trial fan-out) receives its own stream derived from one
//! top-level seed, so a single number reproduces a whole run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags for [`derive`].
pub mod stream {
    pub const DATA: u64 = 0x6461_7461;
    pub const INIT: u64 = 0x696e_6974;
    pub const EPOCH: u64 = 0x6570_6f63;
    pub const TRIAL: u64 = 0x7472_6961;
    pub const CERTIFY: u64 = 0x6365_7274;
    pub const GRADCHECK: u64 = 0x6772_6164;
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed for `(stream, index)` from `seed`.
pub fn derive(seed: u64, stream: u64, index: u64) -> u64 {
    let a = mix(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let b = mix(a ^ stream.wrapping_mul(0xd6e8_feb8_6659_fd93));
    mix(b ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn child_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    rng(derive(seed, stream, index))
}
