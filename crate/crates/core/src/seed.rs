//! Seed plumbing. Every stage derives its own RNG stream from the single
//! global seed so that re-running one stage never perturbs another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derives a per-stage seed from the global seed and a stage name
/// (FNV-1a over the name, mixed with the global seed).
pub fn substream(global_seed: u64, stage: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix64 finalizer over the combined value
    let mut z = h ^ global_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic RNG for a named stage.
pub fn rng_for(global_seed: u64, stage: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream(global_seed, stage))
}
