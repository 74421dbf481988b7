//! Unnormalized log joints `log p(x, z)` as expression graphs.
//!
//! A model owns its observed data; [`Model::log_joint`] builds the log joint as
//! a function of a latent node `z`. Models with global and per-datapoint
//! structure also implement [`Hierarchical`], which is what makes unbiased data
//! subsampling possible: the operators used here are linear in the log density,
//! so a rescaled minibatch sum gives unbiased operator values and gradients.

pub mod lfa;

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::autodiff::{Graph, NodeId, Shape};
use crate::{Error, Result};

pub use lfa::{LfaPosterior, LogisticFactorAnalysis, PixelData};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Support {
    ContinuousReals,
    /// The integers `0..=c`.
    DiscreteRange(usize),
}

pub trait Model {
    fn latent_dim(&self) -> usize;

    fn support(&self) -> Support {
        Support::ContinuousReals
    }

    /// `log p(x, z)` up to a constant, with the data term multiplied by `scale`.
    fn log_joint(&self, g: &mut Graph, z: NodeId, scale: f64) -> Result<NodeId>;

    fn as_hierarchical(&self) -> Option<&dyn Hierarchical> {
        None
    }
}

/// `log p(β) + Σᵢ [log p(xᵢ | zᵢ, β) + log p(zᵢ | β)]`.
pub trait Hierarchical {
    fn num_points(&self) -> usize;

    /// `log p(β)`.
    fn log_prior_global(&self, g: &mut Graph, z: NodeId) -> Result<NodeId>;

    /// `log p(xᵢ | zᵢ, β) + log p(zᵢ | β)`.
    fn local_term(&self, g: &mut Graph, z: NodeId, i: usize) -> Result<NodeId>;
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `log N(x; mean, sd²)` for scalar nodes.
pub fn normal_log_density(g: &mut Graph, x: NodeId, mean: NodeId, sd: f64) -> Result<NodeId> {
    let d = g.sub(x, mean)?;
    let sq = g.square(d)?;
    let quad = g.scale_by(-0.5 / (sd * sd), sq)?;
    let c = g.scalar(-sd.ln() - HALF_LN_2PI);
    g.add(quad, c)
}

fn check_latent(g: &Graph, z: NodeId, dim: usize) -> Result<()> {
    let n = g.shape(z).len();
    if n != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: n });
    }
    Ok(())
}

/// Builds the log joint with the data term multiplied by `scale ≥ 1`.
pub fn log_joint_graph(m: &dyn Model, g: &mut Graph, z: NodeId, scale: f64) -> Result<NodeId> {
    if !(scale >= 1.0) || !scale.is_finite() {
        return Err(Error::InvalidConfig(format!("log-joint scale must be ≥ 1, got {scale}")));
    }
    check_latent(g, z, m.latent_dim())?;
    m.log_joint(g, z, scale)
}

/// `log p(β) + scale · Σ_{i ∈ batch} local_term(i)`.
pub fn batch_log_joint(h: &dyn Hierarchical, g: &mut Graph, z: NodeId, batch: &[usize], scale: f64) -> Result<NodeId> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut sum = g.scalar(0.0);
    for &i in batch {
        let t = h.local_term(g, z, i)?;
        sum = g.add(sum, t)?;
    }
    let scaled = g.scale_by(scale, sum)?;
    let prior = h.log_prior_global(g, z)?;
    g.add(prior, scaled)
}

/// Minibatch log joint rescaled by `n / |batch|`, an unbiased estimate of the
/// full-data log joint (and, by linearity, of its derivatives) under uniformly
/// drawn batches.
pub fn subsampled_log_joint(m: &dyn Model, g: &mut Graph, z: NodeId, batch: &[usize]) -> Result<NodeId> {
    let h = m.as_hierarchical().ok_or(Error::NotHierarchical)?;
    check_latent(g, z, m.latent_dim())?;
    let n = h.num_points();
    if batch.is_empty() {
        return Err(Error::BadIndices("empty batch".into()));
    }
    let mut seen = Vec::with_capacity(batch.len());
    for &i in batch {
        if i >= n {
            return Err(Error::BadIndices(format!("index {i} out of range for {n} points")));
        }
        if seen.contains(&i) {
            return Err(Error::BadIndices(format!("index {i} repeated")));
        }
        seen.push(i);
    }
    batch_log_joint(h, g, z, batch, n as f64 / batch.len() as f64)
}

/// `log p(β) + Σᵢ wᵢ · local_term(i)` with per-point weights taken from the
/// length-`n` node `weights`. Binding the weights to `n/m` on a drawn batch
/// and 0 elsewhere reproduces [`subsampled_log_joint`] without rebuilding the
/// graph for every batch.
pub fn weighted_log_joint(h: &dyn Hierarchical, g: &mut Graph, z: NodeId, weights: NodeId) -> Result<NodeId> {
    let n = h.num_points();
    if g.shape(weights) != Shape::Vector(n) {
        return Err(Error::DimensionMismatch { expected: n, found: g.shape(weights).len() });
    }
    let mut terms = Vec::with_capacity(n);
    for i in 0..n {
        terms.push(h.local_term(g, z, i)?);
    }
    let locals = g.concat(&terms)?;
    let data = g.dot(weights, locals)?;
    let prior = h.log_prior_global(g, z)?;
    g.add(prior, data)
}

fn full_hierarchical_joint(h: &dyn Hierarchical, g: &mut Graph, z: NodeId, scale: f64) -> Result<NodeId> {
    let all: Vec<usize> = (0..h.num_points()).collect();
    if all.is_empty() {
        return h.log_prior_global(g, z);
    }
    batch_log_joint(h, g, z, &all, scale)
}

/// Isotropic standard normal, optionally shifted by a constant `offset` (which
/// makes it unnormalized without changing the posterior).
#[derive(Clone, Debug)]
pub struct StandardNormal {
    pub dim: usize,
    pub offset: f64,
}

impl StandardNormal {
    pub fn new(dim: usize) -> Self {
        Self { dim, offset: 0.0 }
    }
}

impl Model for StandardNormal {
    fn latent_dim(&self) -> usize {
        self.dim
    }

    fn log_joint(&self, g: &mut Graph, z: NodeId, _scale: f64) -> Result<NodeId> {
        check_latent(g, z, self.dim)?;
        let sq = g.dot(z, z)?;
        let quad = g.scale_by(-0.5, sq)?;
        let c = g.scalar(self.offset - self.dim as f64 * HALF_LN_2PI);
        g.add(quad, c)
    }
}

/// `½ N(z; −3, 1) + ½ N(z; 3, 1)` on the real line.
#[derive(Clone, Debug)]
pub struct MixtureTarget {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub sds: [f64; 2],
}

impl Default for MixtureTarget {
    fn default() -> Self {
        Self { weights: [0.5, 0.5], means: [-3.0, 3.0], sds: [1.0, 1.0] }
    }
}

impl MixtureTarget {
    pub fn density(&self, z: f64) -> f64 {
        (0..2)
            .map(|k| {
                let u = (z - self.means[k]) / self.sds[k];
                self.weights[k] * (-0.5 * u * u).exp() / (self.sds[k] * (2.0 * PI).sqrt())
            })
            .sum()
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let k = if rng.random::<f64>() < self.weights[0] { 0 } else { 1 };
        self.means[k] + self.sds[k] * crate::rng::normal(rng)
    }
}

impl Model for MixtureTarget {
    fn latent_dim(&self) -> usize {
        1
    }

    fn log_joint(&self, g: &mut Graph, z: NodeId, _scale: f64) -> Result<NodeId> {
        check_latent(g, z, 1)?;
        let z = g.index(z, 0)?;
        let mut comps = [z; 2];
        for k in 0..2 {
            let mean = g.scalar(self.means[k]);
            let lp = normal_log_density(g, z, mean, self.sds[k])?;
            let lw = g.scalar(self.weights[k].ln());
            comps[k] = g.add(lp, lw)?;
        }
        g.log_add_exp(comps[0], comps[1])
    }
}

/// Conjugate Gaussian mean model: `z ~ N(0, s₀² I)`, `xᵢ ~ N(z, s² I)`.
///
/// Hierarchical with only a global latent, so it supports subsampling.
#[derive(Clone, Debug)]
pub struct GaussianMean {
    pub data: Vec<Vec<f64>>,
    pub prior_sd: f64,
    pub noise_sd: f64,
}

impl GaussianMean {
    pub fn new(data: Vec<Vec<f64>>, prior_sd: f64, noise_sd: f64) -> Self {
        Self { data, prior_sd, noise_sd }
    }

    pub fn dim(&self) -> usize {
        self.data.first().map_or(1, Vec::len)
    }

    /// Exact posterior mean and standard deviation per coordinate.
    pub fn posterior(&self) -> (Vec<f64>, f64) {
        let n = self.data.len() as f64;
        let prec = 1.0 / (self.prior_sd * self.prior_sd) + n / (self.noise_sd * self.noise_sd);
        let var = 1.0 / prec;
        let mean = (0..self.dim())
            .map(|j| var * self.data.iter().map(|x| x[j]).sum::<f64>() / (self.noise_sd * self.noise_sd))
            .collect();
        (mean, var.sqrt())
    }

    fn isotropic(&self, g: &mut Graph, x: NodeId, mean: Option<&[f64]>, sd: f64) -> Result<NodeId> {
        let d = self.dim();
        let centered = match mean {
            Some(m) => {
                let c = g.vector(m.to_vec());
                g.sub(x, c)?
            }
            None => x,
        };
        let sq = g.dot(centered, centered)?;
        let quad = g.scale_by(-0.5 / (sd * sd), sq)?;
        let c = g.scalar(-(d as f64) * (sd.ln() + HALF_LN_2PI));
        g.add(quad, c)
    }
}

impl Model for GaussianMean {
    fn latent_dim(&self) -> usize {
        self.dim()
    }

    fn log_joint(&self, g: &mut Graph, z: NodeId, scale: f64) -> Result<NodeId> {
        check_latent(g, z, self.dim())?;
        full_hierarchical_joint(self, g, z, scale)
    }

    fn as_hierarchical(&self) -> Option<&dyn Hierarchical> {
        Some(self)
    }
}

impl Hierarchical for GaussianMean {
    fn num_points(&self) -> usize {
        self.data.len()
    }

    fn log_prior_global(&self, g: &mut Graph, z: NodeId) -> Result<NodeId> {
        self.isotropic(g, z, None, self.prior_sd)
    }

    fn local_term(&self, g: &mut Graph, z: NodeId, i: usize) -> Result<NodeId> {
        let x = self.data.get(i).ok_or_else(|| Error::BadIndices(format!("no point {i}")))?;
        // log N(xᵢ; z, s²) is symmetric in (xᵢ, z).
        self.isotropic(g, z, Some(x), self.noise_sd)
    }
}

/// Two-level Gaussian hierarchy with latent vector `(β, z₁, …, zₙ)`:
/// `β ~ N(0, 1)`, `zᵢ | β ~ N(β, 1)`, `xᵢ | zᵢ ~ N(zᵢ, 1)`.
#[derive(Clone, Debug)]
pub struct GaussianHierarchy {
    pub data: Vec<f64>,
}

impl Model for GaussianHierarchy {
    fn latent_dim(&self) -> usize {
        self.data.len() + 1
    }

    fn log_joint(&self, g: &mut Graph, z: NodeId, scale: f64) -> Result<NodeId> {
        check_latent(g, z, self.latent_dim())?;
        full_hierarchical_joint(self, g, z, scale)
    }

    fn as_hierarchical(&self) -> Option<&dyn Hierarchical> {
        Some(self)
    }
}

impl Hierarchical for GaussianHierarchy {
    fn num_points(&self) -> usize {
        self.data.len()
    }

    fn log_prior_global(&self, g: &mut Graph, z: NodeId) -> Result<NodeId> {
        let beta = g.index(z, 0)?;
        let zero = g.scalar(0.0);
        normal_log_density(g, beta, zero, 1.0)
    }

    fn local_term(&self, g: &mut Graph, z: NodeId, i: usize) -> Result<NodeId> {
        let x = *self.data.get(i).ok_or_else(|| Error::BadIndices(format!("no point {i}")))?;
        let beta = g.index(z, 0)?;
        let zi = g.index(z, i + 1)?;
        let xi = g.scalar(x);
        let lik = normal_log_density(g, xi, zi, 1.0)?;
        let prior = normal_log_density(g, zi, beta, 1.0)?;
        g.add(lik, prior)
    }
}

/// Unnormalized distribution on `{0, …, c}` given by nonnegative weights.
#[derive(Clone, Debug)]
pub struct DiscreteTarget {
    pub weights: Vec<f64>,
}

impl DiscreteTarget {
    pub fn max_value(&self) -> usize {
        self.weights.len().saturating_sub(1)
    }

    pub fn support(&self) -> Support {
        Support::DiscreteRange(self.max_value())
    }
}
