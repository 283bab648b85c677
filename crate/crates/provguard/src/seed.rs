//! Deterministic seed derivation.
//!
//! Every randomized operation in the crate draws from a [`ChaCha8Rng`] whose
//! seed is derived from the caller's seed plus a stream tag, so independent
//! stages (augmentation views, attack sub-steps, weight init) never share a
//! stream and the whole pipeline is reproducible from one root seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` and a stream tag.
pub fn derive(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ stream.wrapping_mul(GOLDEN))
}

/// Derive a child seed from `seed` and two stream tags.
pub fn derive2(seed: u64, a: u64, b: u64) -> u64 {
    derive(derive(seed, a), b)
}

/// Seeded RNG for one randomized operation.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// Stream tags. Values are arbitrary but must stay stable: they are part of
// the determinism contract (same seed, same output bytes).
pub mod stream {
    pub const EDGE_AUG: u64 = 0x01;
    pub const NODE_AUG: u64 = 0x02;
    pub const FEAT_AUG: u64 = 0x03;
    pub const VIEW: u64 = 0x10;
    pub const WEIGHT_INIT: u64 = 0x20;
    pub const EPOCH: u64 = 0x21;
    pub const KMEANS: u64 = 0x30;
    pub const ATTACK_GRAPH: u64 = 0x40;
    pub const ATTACK_STRUCT: u64 = 0x41;
    pub const ATTACK_FEAT: u64 = 0x42;
    pub const SYNTH: u64 = 0x50;
}
