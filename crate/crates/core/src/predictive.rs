//! Posterior-predictive scoring of held-out pixels.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::models::lfa::{bernoulli_log_prob, LogisticFactorAnalysis};
use crate::rng::{choose_distinct, substream};
use crate::{Error, Result};

/// `log[(1/S) Σ_s Π_{p ∈ mask} Bernoulli(x_p | σ(w_pᵀ z_s + b_p))]`.
///
/// `held_out[p]` marks the pixels being scored. An empty mask scores 0.
pub fn posterior_predictive_loglik(
    model: &LogisticFactorAnalysis,
    samples: &[Vec<f64>],
    x: &[f64],
    held_out: &[bool],
) -> Result<f64> {
    let p = model.pixels();
    if x.len() != p || held_out.len() != p {
        return Err(Error::DimensionMismatch { expected: p, found: x.len().min(held_out.len()) });
    }
    if !held_out.iter().any(|&h| h) {
        return Ok(0.0);
    }
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let per_sample = samples
        .iter()
        .map(|z| {
            if z.len() != model.latent_dim() {
                return Err(Error::DimensionMismatch { expected: model.latent_dim(), found: z.len() });
            }
            let logits = model.logits(z);
            Ok(held_out
                .iter()
                .zip(x)
                .zip(&logits)
                .filter(|((&h, _), _)| h)
                .map(|((_, &xp), &a)| bernoulli_log_prob(xp, a))
                .sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(log_mean_exp(&per_sample))
}

/// `log((1/n) Σ exp(v_i))`, shifted by the maximum.
pub fn log_mean_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = v.iter().map(|x| (x - m).exp()).sum();
    m + (s / v.len() as f64).ln()
}

/// Marks `pixels / 2` pixels as held out, chosen uniformly from `seed`.
pub fn half_mask(pixels: usize, seed: u64, image: u64) -> Vec<bool> {
    let mut rng = substream(seed, image, 0);
    let mut mask = alloc::vec![false; pixels];
    for i in choose_distinct(&mut rng, pixels, pixels / 2) {
        mask[i] = true;
    }
    mask
}
