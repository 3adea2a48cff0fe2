//! Deterministic seed derivation.
//!
//! All randomness flows through ChaCha8 streams keyed by a root seed plus
//! a stream tag, so adding a consumer never shifts the draws of another
//! and results are stable across platforms and rand versions.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step, the standard 64-bit mixer.
fn splitmix64(state: &mut u64) {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
}

fn splitmix64_next(state: &mut u64) -> u64 {
    splitmix64(state);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes an ordered tuple of values into a single 64-bit seed.
pub fn mix(parts: &[u64]) -> u64 {
    let mut state = 0x243F_6A88_85A3_08D3u64;
    let mut out = 0u64;
    for &p in parts {
        state ^= p;
        out ^= splitmix64_next(&mut state);
    }
    out
}

/// Seeded generator for the given root seed and stream tag.
pub fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(&[seed, tag]))
}
