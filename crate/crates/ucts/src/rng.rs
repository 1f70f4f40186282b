//! Deterministic seed derivation.
//!
//! All randomness in the crate flows from explicit `u64` seeds. Independent
//! streams (one per tree, per sweep iteration, ...) are derived by hashing
//! the master seed together with an index, so results do not depend on the
//! order in which parallel workers run.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step; a full-period mixer over u64.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a seed with an index into a new independent seed.
pub fn mix(seed: u64, index: u64) -> u64 {
    let mut state = seed ^ index.wrapping_mul(0xa076_1d64_78bd_642f);
    let a = splitmix64(&mut state);
    splitmix64(&mut state) ^ a.rotate_left(17)
}

/// RNG stream for `(seed, index)`; identical regardless of thread scheduling.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut state = mix(seed, index);
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// RNG seeded directly from a single u64.
pub fn from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
