//! Logistic factor analysis for binary images.
//!
//! `zᵢ ~ N(0, I_K)` and `x_{i,p} ~ Bernoulli(σ(w_pᵀ zᵢ + b_p))`. The weights are
//! fixed during posterior inference; [`pretrain`] fits them by joint MAP
//! gradient ascent for desk-scale experiments.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{check_latent, Model, HALF_LN_2PI};
use crate::autodiff::softplus;
use crate::autodiff::{Graph, NodeId, Shape};
use crate::optimizer::Adam;
use crate::rng::{fill_normal, substream};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticFactorAnalysis {
    k: usize,
    p: usize,
    /// `p × k`, row `p` is `w_p`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LogisticFactorAnalysis {
    pub fn new(k: usize, p: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != k * p {
            return Err(Error::DimensionMismatch { expected: k * p, found: weights.len() });
        }
        if bias.len() != p {
            return Err(Error::DimensionMismatch { expected: p, found: bias.len() });
        }
        if k == 0 || p == 0 {
            return Err(Error::InvalidConfig("latent and pixel dimensions must be positive".into()));
        }
        Ok(Self { k, p, weights, bias })
    }

    /// Random generator with `N(0, weight_sd²)` weights and `N(0, bias_sd²)` biases.
    pub fn random<R: Rng + ?Sized>(k: usize, p: usize, weight_sd: f64, bias_sd: f64, rng: &mut R) -> Self {
        let mut weights = vec![0.0; k * p];
        let mut bias = vec![0.0; p];
        fill_normal(rng, &mut weights);
        fill_normal(rng, &mut bias);
        weights.iter_mut().for_each(|w| *w *= weight_sd);
        bias.iter_mut().for_each(|b| *b *= bias_sd);
        Self { k, p, weights, bias }
    }

    pub fn latent_dim(&self) -> usize {
        self.k
    }

    pub fn pixels(&self) -> usize {
        self.p
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn logits(&self, z: &[f64]) -> Vec<f64> {
        (0..self.p)
            .map(|p| {
                let row = &self.weights[p * self.k..(p + 1) * self.k];
                self.bias[p] + row.iter().zip(z).map(|(w, z)| w * z).sum::<f64>()
            })
            .collect()
    }

    pub fn sample_latent<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut z = vec![0.0; self.k];
        fill_normal(rng, &mut z);
        z
    }

    pub fn sample_image<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = self.sample_latent(rng);
        self.logits(&z).into_iter().map(|a| if rng.random::<f64>() < sigmoid(a) { 1.0 } else { 0.0 }).collect()
    }

    /// Exact `log p(x, z)` in plain arithmetic.
    pub fn log_joint_value(&self, x: &[f64], z: &[f64]) -> f64 {
        let prior: f64 = z.iter().map(|v| -0.5 * v * v - HALF_LN_2PI).sum();
        prior + self.logits(z).iter().zip(x).map(|(&a, &x)| bernoulli_log_prob(x, a)).sum::<f64>()
    }
}

pub(crate) fn sigmoid(a: f64) -> f64 {
    #[allow(unused_imports)]
    use num_traits::Float;
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// `log Bernoulli(x | σ(a))` via `log σ(a) = −softplus(−a)`.
pub fn bernoulli_log_prob(x: f64, logit: f64) -> f64 {
    if x > 0.5 {
        -softplus(-logit)
    } else {
        -softplus(logit)
    }
}

/// How observed pixels enter the graph: as constants, or as the graph inputs
/// `x_pos` and `x_neg` (so one graph can be reused across images).
#[derive(Clone, Debug)]
pub enum PixelData {
    Constant { pos: Vec<f64>, neg: Vec<f64> },
    Inputs,
}

pub const X_POS: &str = "x_pos";
pub const X_NEG: &str = "x_neg";

/// `x_pos = mask ⊙ x`, `x_neg = mask ⊙ (1 − x)`; unobserved pixels drop out.
pub fn observation_vectors(x: &[f64], observed: &[bool]) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != observed.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: observed.len() });
    }
    let pos = x.iter().zip(observed).map(|(&x, &o)| if o { x } else { 0.0 }).collect();
    let neg = x.iter().zip(observed).map(|(&x, &o)| if o { 1.0 - x } else { 0.0 }).collect();
    Ok((pos, neg))
}

/// The LFA log joint for one image.
#[derive(Clone, Debug)]
pub struct LfaPosterior<'a> {
    pub model: &'a LogisticFactorAnalysis,
    pub data: PixelData,
}

impl<'a> LfaPosterior<'a> {
    pub fn fully_observed(model: &'a LogisticFactorAnalysis, x: &[f64]) -> Result<Self> {
        Self::masked(model, x, &vec![true; x.len()])
    }

    pub fn masked(model: &'a LogisticFactorAnalysis, x: &[f64], observed: &[bool]) -> Result<Self> {
        if x.len() != model.p {
            return Err(Error::DimensionMismatch { expected: model.p, found: x.len() });
        }
        let (pos, neg) = observation_vectors(x, observed)?;
        Ok(Self { model, data: PixelData::Constant { pos, neg } })
    }

    pub fn with_inputs(model: &'a LogisticFactorAnalysis) -> Self {
        Self { model, data: PixelData::Inputs }
    }
}

impl Model for LfaPosterior<'_> {
    fn latent_dim(&self) -> usize {
        self.model.k
    }

    fn log_joint(&self, g: &mut Graph, z: NodeId, scale: f64) -> Result<NodeId> {
        let (k, p) = (self.model.k, self.model.p);
        check_latent(g, z, k)?;
        let (pos, neg) = match &self.data {
            PixelData::Constant { pos, neg } => (g.vector(pos.clone()), g.vector(neg.clone())),
            PixelData::Inputs => (g.input(X_POS, Shape::Vector(p))?, g.input(X_NEG, Shape::Vector(p))?),
        };
        let sq = g.dot(z, z)?;
        let quad = g.scale_by(-0.5, sq)?;
        let c = g.scalar(-(k as f64) * HALF_LN_2PI);
        let prior = g.add(quad, c)?;

        let w = g.vector(self.model.weights.clone());
        let b = g.vector(self.model.bias.clone());
        let a = g.affine(w, z, b, p, k)?;
        let na = g.neg(a)?;
        let sp_neg = g.softplus(na)?;
        let sp_pos = g.softplus(a)?;
        let on = g.dot(pos, sp_neg)?;
        let off = g.dot(neg, sp_pos)?;
        let nll = g.add(on, off)?;
        let lik = g.scale_by(-scale, nll)?;
        g.add(prior, lik)
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PretrainConfig {
    pub latent_dim: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    /// Standard deviation of the Gaussian prior on weights and biases.
    pub weight_prior_sd: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { latent_dim: 10, iterations: 1500, learning_rate: 0.05, weight_prior_sd: 3.0, seed: 0 }
    }
}

/// Fits `W`, `b` (and per-image latents, discarded) by full-batch Adam ascent
/// on the joint MAP objective. Returns the model and the final objective per
/// image.
pub fn pretrain(images: &[Vec<f64>], cfg: &PretrainConfig) -> Result<(LogisticFactorAnalysis, f64)> {
    let n = images.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let p = images[0].len();
    let k = cfg.latent_dim;
    if images.iter().any(|x| x.len() != p) {
        return Err(Error::InvalidConfig("images differ in size".into()));
    }
    if images.iter().flatten().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidConfig("pretraining data must be binary".into()));
    }
    let mut rng = substream(cfg.seed, 0, 0);
    let mut model = LogisticFactorAnalysis::random(k, p, 0.1, 0.0, &mut rng);
    let mut latents = vec![0.0; n * k];
    fill_normal(&mut rng, &mut latents);
    latents.iter_mut().for_each(|z| *z *= 0.1);

    let n_w = k * p;
    let mut params = vec![0.0; n_w + p + n * k];
    params[..n_w].copy_from_slice(&model.weights);
    params[n_w + p..].copy_from_slice(&latents);
    let mut adam = Adam::new(params.len(), cfg.learning_rate, Default::default());
    let tau2 = cfg.weight_prior_sd * cfg.weight_prior_sd;
    let mut objective = 0.0;
    let mut grad = vec![0.0; params.len()];
    for _ in 0..cfg.iterations {
        grad.iter_mut().for_each(|v| *v = 0.0);
        objective = 0.0;
        {
            let (w, rest) = params.split_at(n_w);
            let (b, zs) = rest.split_at(p);
            let (gw, grest) = grad.split_at_mut(n_w);
            let (gb, gz) = grest.split_at_mut(p);
            for (i, x) in images.iter().enumerate() {
                let z = &zs[i * k..(i + 1) * k];
                let gzi = &mut gz[i * k..(i + 1) * k];
                for j in 0..k {
                    gzi[j] = -z[j];
                    objective -= 0.5 * z[j] * z[j];
                }
                for px in 0..p {
                    let row = &w[px * k..(px + 1) * k];
                    let a = b[px] + row.iter().zip(z).map(|(w, z)| w * z).sum::<f64>();
                    objective += bernoulli_log_prob(x[px], a);
                    let r = x[px] - sigmoid(a);
                    gb[px] += r;
                    for j in 0..k {
                        gw[px * k + j] += r * z[j];
                        gzi[j] += r * row[j];
                    }
                }
            }
            for (gwi, wi) in gw.iter_mut().zip(w) {
                *gwi -= wi / tau2;
            }
            for (gbi, bi) in gb.iter_mut().zip(b) {
                *gbi -= bi / tau2;
            }
        }
        adam.ascend(&mut params, &grad);
    }
    model.weights.copy_from_slice(&params[..n_w]);
    model.bias.copy_from_slice(&params[n_w..n_w + p]);
    Ok((model, objective / n as f64))
}
