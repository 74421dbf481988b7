//! Variational families `z = R(ε; λ)`.
//!
//! Every family is a differentiable sampler from standard-normal noise. Only
//! [`MeanFieldGaussian`] also exposes a density and score; the programs are
//! density-free and can only be paired with operators that never evaluate
//! `log q`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use rand::{Rng, RngCore};

use crate::autodiff::{Graph, NodeId, ParamSet, Shape};
use crate::{Error, Result};

pub trait VariationalFamily {
    /// Dimension of `z`.
    fn dim(&self) -> usize;

    /// Dimension of the noise `ε`.
    fn noise_dim(&self) -> usize;

    /// Declares the `λ` blocks in `g`.
    fn declare(&self, g: &mut Graph) -> Result<ParamSet>;

    /// `R(ε; λ)` as a length-`dim` vector node.
    fn sample(&self, g: &mut Graph, eps: NodeId, lambda: &ParamSet) -> Result<NodeId>;

    fn has_density(&self) -> bool {
        false
    }

    /// `log q(z; λ)`.
    fn log_density(&self, _g: &mut Graph, _z: NodeId, _lambda: &ParamSet) -> Result<NodeId> {
        Err(Error::DensityUnavailable)
    }

    /// Initial flat `λ`.
    fn init(&self, rng: &mut dyn RngCore) -> Vec<f64>;
}

fn check_len(g: &Graph, node: NodeId, expected: usize) -> Result<()> {
    let found = g.shape(node).len();
    if found != expected {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// `∇_λ log q(z; λ)` as a flat vector node.
pub fn score(q: &dyn VariationalFamily, g: &mut Graph, z: NodeId, lambda: &ParamSet) -> Result<NodeId> {
    let lq = q.log_density(g, z, lambda)?;
    lambda.gradient(g, lq)
}

/// Inverse of softplus, `log(eˢ − 1)`.
pub fn softplus_inverse(s: f64) -> f64 {
    if s > 30.0 {
        s
    } else {
        s.exp_m1().ln()
    }
}

/// Fully factorized Gaussian, `λ = (μ, ρ)` with `σ = softplus(ρ)`.
#[derive(Clone, Debug)]
pub struct MeanFieldGaussian {
    pub dim: usize,
}

impl MeanFieldGaussian {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    /// Flat `λ` for the given mean and standard deviations.
    pub fn params(mean: &[f64], sd: &[f64]) -> Vec<f64> {
        mean.iter().copied().chain(sd.iter().map(|&s| softplus_inverse(s))).collect()
    }

    /// `(μ, σ)` from a flat `λ`.
    pub fn decode(&self, lambda: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mu, rho) = lambda.split_at(self.dim);
        (mu.to_vec(), rho.iter().map(|&r| crate::autodiff::softplus(r)).collect())
    }

    fn blocks(&self, lambda: &ParamSet) -> Result<(NodeId, NodeId)> {
        match lambda.nodes()[..] {
            [mu, rho] => Ok((mu, rho)),
            _ => Err(Error::InvalidConfig(format!("expected 2 Gaussian blocks, got {}", lambda.nodes().len()))),
        }
    }
}

impl VariationalFamily for MeanFieldGaussian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn noise_dim(&self) -> usize {
        self.dim
    }

    fn declare(&self, g: &mut Graph) -> Result<ParamSet> {
        let mut set = ParamSet::new();
        set.declare(g, "q.mu", self.dim)?;
        set.declare(g, "q.rho", self.dim)?;
        Ok(set)
    }

    fn sample(&self, g: &mut Graph, eps: NodeId, lambda: &ParamSet) -> Result<NodeId> {
        check_len(g, eps, self.dim)?;
        let (mu, rho) = self.blocks(lambda)?;
        let sigma = g.softplus(rho)?;
        let spread = g.mul(sigma, eps)?;
        g.add(mu, spread)
    }

    fn has_density(&self) -> bool {
        true
    }

    fn log_density(&self, g: &mut Graph, z: NodeId, lambda: &ParamSet) -> Result<NodeId> {
        check_len(g, z, self.dim)?;
        let (mu, rho) = self.blocks(lambda)?;
        let sigma = g.softplus(rho)?;
        let centered = g.sub(z, mu)?;
        let inv = g.recip(sigma)?;
        let u = g.mul(centered, inv)?;
        let quad = g.dot(u, u)?;
        let half_quad = g.scale_by(-0.5, quad)?;
        let log_sigma = g.log(sigma)?;
        let log_det = g.sum(log_sigma)?;
        let a = g.sub(half_quad, log_det)?;
        let c = g.scalar(-0.5 * self.dim as f64 * (2.0 * core::f64::consts::PI).ln());
        g.add(a, c)
    }

    fn init(&self, _rng: &mut dyn RngCore) -> Vec<f64> {
        Self::params(&vec![0.0; self.dim], &vec![1.0; self.dim])
    }
}

/// Glorot-uniform weights for a `rows × cols` layer.
pub(crate) fn glorot(rng: &mut dyn RngCore, rows: usize, cols: usize) -> Vec<f64> {
    let s = (6.0 / (rows + cols) as f64).sqrt();
    (0..rows * cols).map(|_| rng.random_range(-s..s)).collect()
}

/// Density-free program: a two-hidden-layer ReLU network applied to
/// standard-normal noise, with an affine output layer.
#[derive(Clone, Debug)]
pub struct VariationalProgram {
    pub noise_dim: usize,
    pub hidden: usize,
    pub dim: usize,
}

impl VariationalProgram {
    /// Noise of the latent dimension and hidden width twice that.
    pub fn for_latent(dim: usize) -> Self {
        Self { noise_dim: dim, hidden: 2 * dim, dim }
    }

    fn layers(&self) -> [(usize, usize); 3] {
        [(self.hidden, self.noise_dim), (self.hidden, self.hidden), (self.dim, self.hidden)]
    }
}

impl VariationalFamily for VariationalProgram {
    fn dim(&self) -> usize {
        self.dim
    }

    fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    fn declare(&self, g: &mut Graph) -> Result<ParamSet> {
        let mut set = ParamSet::new();
        for (i, (rows, cols)) in self.layers().into_iter().enumerate() {
            set.declare(g, &format!("q.w{i}"), rows * cols)?;
            set.declare(g, &format!("q.b{i}"), rows)?;
        }
        Ok(set)
    }

    fn sample(&self, g: &mut Graph, eps: NodeId, lambda: &ParamSet) -> Result<NodeId> {
        check_len(g, eps, self.noise_dim)?;
        let nodes = lambda.nodes();
        let mut h = eps;
        for (i, (rows, cols)) in self.layers().into_iter().enumerate() {
            let a = g.affine(nodes[2 * i], h, nodes[2 * i + 1], rows, cols)?;
            h = if i < 2 { g.relu(a)? } else { a };
        }
        Ok(h)
    }

    fn init(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut out = Vec::new();
        for (rows, cols) in self.layers() {
            out.extend(glorot(rng, rows, cols));
            out.extend(core::iter::repeat_n(0.0, rows));
        }
        out
    }
}

/// One-dimensional program with separately parameterized half-lines:
/// `z = R⁺(ε₁; a₁, b₁)` if `ε₃ > 0`, else `−R⁺(ε₂; a₂, b₂)`, with
/// `R⁺(ε; a, b) = softplus(a ε + b)`. `λ = (a₁, b₁, a₂, b₂)`.
#[derive(Clone, Debug, Default)]
pub struct SignSplitProgram;

impl SignSplitProgram {
    /// `softplus(a ε + b)` in plain arithmetic.
    pub fn branch(a: f64, b: f64, eps: f64) -> f64 {
        crate::autodiff::softplus(a * eps + b)
    }
}

impl VariationalFamily for SignSplitProgram {
    fn dim(&self) -> usize {
        1
    }

    fn noise_dim(&self) -> usize {
        3
    }

    fn declare(&self, g: &mut Graph) -> Result<ParamSet> {
        let mut set = ParamSet::new();
        set.declare(g, "q.sign_split", 4)?;
        Ok(set)
    }

    fn sample(&self, g: &mut Graph, eps: NodeId, lambda: &ParamSet) -> Result<NodeId> {
        check_len(g, eps, 3)?;
        let lam = lambda.nodes()[0];
        let mut branch = |ei: usize, ai: usize| -> Result<NodeId> {
            let e = g.index(eps, ei)?;
            let a = g.index(lam, ai)?;
            let b = g.index(lam, ai + 1)?;
            let ae = g.mul(a, e)?;
            let pre = g.add(ae, b)?;
            g.softplus(pre)
        };
        let pos = branch(0, 0)?;
        let r2 = branch(1, 2)?;
        let neg = g.neg(r2)?;
        let e3 = g.index(eps, 2)?;
        let z = g.select(e3, pos, neg)?;
        debug_assert_eq!(g.shape(z), Shape::Scalar);
        g.concat(&[z])
    }

    fn init(&self, _rng: &mut dyn RngCore) -> Vec<f64> {
        vec![1.0, 0.0, 1.0, 0.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Bindings;
    use crate::rng::substream;

    struct Setup {
        g: Graph,
        lambda: ParamSet,
        eps: NodeId,
        z: NodeId,
    }

    fn setup(q: &dyn VariationalFamily) -> Setup {
        let mut g = Graph::new();
        let lambda = q.declare(&mut g).unwrap();
        let eps = g.input("eps", Shape::Vector(q.noise_dim())).unwrap();
        let z = q.sample(&mut g, eps, &lambda).unwrap();
        Setup { g, lambda, eps, z }
    }

    fn bind(s: &Setup, lambda: &[f64], eps: &[f64]) -> Bindings {
        let mut b = Bindings::new();
        s.lambda.bind(&mut b, lambda).unwrap();
        b.set(s.g.var_id("eps").unwrap(), eps);
        b
    }

    #[test]
    fn gaussian_sample_examples() {
        let q = MeanFieldGaussian::new(1);
        let s = setup(&q);
        let lam = MeanFieldGaussian::params(&[2.0], &[3.0]);
        let z0 = s.g.eval(s.z, &bind(&s, &lam, &[0.0])).unwrap();
        assert_eq!(z0, vec![2.0]);
        let z1 = s.g.eval(s.z, &bind(&s, &lam, &[1.0])).unwrap();
        assert!((z1[0] - 5.0).abs() < 1e-12);
        let _ = s.eps;
    }

    #[test]
    fn gaussian_log_density_examples() {
        for (d, mu, sd, z, expect) in [
            (1, 0.0, 1.0, 0.0, -0.918_938_533_204_672_7),
            (2, 0.0, 1.0, 0.0, -1.837_877_066_409_345_5),
            // Direct formula: −½[(3−1)²/4 + ln(2π·4)].
            (1, 1.0, 2.0, 3.0, -0.5 * (1.0 + (8.0 * core::f64::consts::PI).ln())),
        ] {
            let q = MeanFieldGaussian::new(d);
            let mut g = Graph::new();
            let lambda = q.declare(&mut g).unwrap();
            let zn = g.input("z", Shape::Vector(d)).unwrap();
            let lq = q.log_density(&mut g, zn, &lambda).unwrap();
            let mut b = Bindings::new();
            lambda.bind(&mut b, &MeanFieldGaussian::params(&vec![mu; d], &vec![sd; d])).unwrap();
            b.set(g.var_id("z").unwrap(), &vec![z; d]);
            let v = g.eval_scalar(lq, &b).unwrap();
            assert!((v - expect).abs() < 1e-12, "{v} vs {expect}");
        }
        assert!((-0.5 * (1.0 + (8.0 * core::f64::consts::PI).ln()) - -2.112_085_713).abs() < 1e-8);
    }

    #[test]
    fn score_examples() {
        let q = MeanFieldGaussian::new(1);
        let mut g = Graph::new();
        let lambda = q.declare(&mut g).unwrap();
        let zn = g.input("z", Shape::Vector(1)).unwrap();
        let sc = score(&q, &mut g, zn, &lambda).unwrap();
        let lam = MeanFieldGaussian::params(&[0.0], &[1.0]);
        let at = |g: &Graph, z: f64| {
            let mut b = Bindings::new();
            lambda.bind(&mut b, &lam).unwrap();
            b.set(g.var_id("z").unwrap(), &[z]);
            g.eval(sc, &b).unwrap()
        };
        assert!((at(&g, 1.0)[0] - 1.0).abs() < 1e-12);
        assert_eq!(at(&g, 0.0)[0], 0.0);

        // ρ-component against central differences of the closed-form density.
        let logq = |rho: f64, z: f64| {
            let s = crate::autodiff::softplus(rho);
            -0.5 * z * z / (s * s) - s.ln() - 0.5 * (2.0 * core::f64::consts::PI).ln()
        };
        let (rho, h) = (lam[1], 1e-5);
        let fd = (logq(rho + h, 2.0) - logq(rho - h, 2.0)) / (2.0 * h);
        let v = at(&g, 2.0)[1];
        assert!((v - fd).abs() <= 1e-6 * fd.abs().max(1.0), "{v} vs {fd}");
    }

    #[test]
    fn programs_have_no_density() {
        let mut g = Graph::new();
        let z = g.input("z", Shape::Vector(1)).unwrap();
        for q in [&SignSplitProgram as &dyn VariationalFamily, &VariationalProgram::for_latent(1)] {
            let lambda = q.declare(&mut g).unwrap();
            assert!(!q.has_density());
            assert_eq!(q.log_density(&mut g, z, &lambda), Err(Error::DensityUnavailable));
            assert_eq!(score(q, &mut g, z, &lambda), Err(Error::DensityUnavailable));
        }
    }

    #[test]
    fn wrong_noise_dimension() {
        let q = VariationalProgram::for_latent(3);
        let mut g = Graph::new();
        let lambda = q.declare(&mut g).unwrap();
        let eps = g.input("eps", Shape::Vector(2)).unwrap();
        assert_eq!(q.sample(&mut g, eps, &lambda), Err(Error::DimensionMismatch { expected: 3, found: 2 }));
    }

    #[test]
    fn program_sampling_is_deterministic_and_matches_a_plain_forward_pass() {
        let q = VariationalProgram::for_latent(2);
        let s = setup(&q);
        let mut rng = substream(5, 0, 0);
        let lam = q.init(&mut rng);
        let eps = [0.4, -1.3];
        let a = s.g.eval(s.z, &bind(&s, &lam, &eps)).unwrap();
        let b = s.g.eval(s.z, &bind(&s, &lam, &eps)).unwrap();
        assert_eq!(a, b);

        let mut h = eps.to_vec();
        let mut at = 0;
        for (i, (rows, cols)) in q.layers().into_iter().enumerate() {
            let w = &lam[at..at + rows * cols];
            let bias = &lam[at + rows * cols..at + rows * cols + rows];
            at += rows * cols + rows;
            h = (0..rows)
                .map(|r| {
                    let v = bias[r] + (0..cols).map(|c| w[r * cols + c] * h[c]).sum::<f64>();
                    if i < 2 {
                        v.max(0.0)
                    } else {
                        v
                    }
                })
                .collect();
        }
        for (x, y) in a.iter().zip(&h) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_split_branches() {
        let s = setup(&SignSplitProgram);
        let lam = [2.0, 1.0, 0.5, -1.0];
        let up = s.g.eval(s.z, &bind(&s, &lam, &[0.3, 0.7, 1.0])).unwrap()[0];
        let down = s.g.eval(s.z, &bind(&s, &lam, &[0.3, 0.7, -1.0])).unwrap()[0];
        assert!((up - SignSplitProgram::branch(2.0, 1.0, 0.3)).abs() < 1e-15);
        assert!((down + SignSplitProgram::branch(0.5, -1.0, 0.7)).abs() < 1e-15);
    }

    #[test]
    fn softplus_inverse_round_trip() {
        for s in [1e-3, 0.5, 1.0, 3.0, 40.0] {
            let r = softplus_inverse(s);
            assert!((crate::autodiff::softplus(r) - s).abs() < 1e-12 * s.max(1.0));
        }
    }
}
