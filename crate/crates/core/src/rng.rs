//! Deterministic random streams.
//!
//! Every random draw in the crate comes from a caller-owned generator. Runs
//! derive independent ChaCha substreams from `(seed, iteration, purpose)` so a
//! given draw never depends on how many draws preceded it elsewhere.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha8Rng;

/// Distinct purposes available under each index.
pub const PURPOSES_PER_INDEX: u64 = 64;

/// Substream `(index, purpose)` of `seed`; `purpose < PURPOSES_PER_INDEX`.
pub fn substream(seed: u64, index: u64, purpose: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    debug_assert!(purpose < PURPOSES_PER_INDEX);
    rng.set_stream(index.wrapping_mul(PURPOSES_PER_INDEX).wrapping_add(purpose));
    rng
}

pub fn fill_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out {
        *v = rng.sample(StandardNormal);
    }
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `k` distinct indices from `0..n`, in increasing order.
pub fn choose_distinct<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> alloc::vec::Vec<usize> {
    // Floyd's algorithm keeps this O(k) in draws.
    let mut chosen = alloc::collections::BTreeSet::new();
    for j in (n - k)..n {
        let t = rng.random_range(0..=j);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    chosen.into_iter().collect()
}
