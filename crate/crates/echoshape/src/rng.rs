//! Deterministic random streams.
//!
//! Every consumer of randomness (shape sampling, noise, weight init, epoch
//! shuffles) derives its own named stream from one master seed, so each
//! component is reproducible in isolation and adding a consumer never shifts
//! the draws seen by another.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the stream named `tag` from `master`.
///
/// The tag is hashed with FNV-1a, mixed into the master seed, and expanded
/// through splitmix64 into a full 256-bit ChaCha seed.
pub fn stream(master: u64, tag: &str) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in tag.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut state = master ^ h;
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Uniform draw from `[0, 1)` with 53 random bits.
pub fn unit(rng: &mut impl RngCore) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    (rng.next_u64() >> 11) as f64 * SCALE
}

/// Uniform draw from `[lo, hi)`.
pub fn uniform(rng: &mut impl RngCore, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit(rng)
}

/// Unbiased uniform index in `0..n` via rejection sampling.
pub fn index(rng: &mut impl RngCore, n: usize) -> usize {
    assert!(n > 0, "index range must be nonempty");
    let n = n as u64;
    let zone = u64::MAX - u64::MAX % n;
    loop {
        let r = rng.next_u64();
        if r < zone {
            return (r % n) as usize;
        }
    }
}

/// In-place Fisher-Yates shuffle driven by `rng`.
pub fn shuffle<T>(rng: &mut impl RngCore, xs: &mut [T]) {
    for i in (1..xs.len()).rev() {
        let j = index(rng, i + 1);
        xs.swap(i, j);
    }
}
