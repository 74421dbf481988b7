//! Test functions `f_θ: ℝᵈ → ℝᵈ`.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use rand::RngCore;

use crate::autodiff::{Graph, NodeId, ParamSet};
use crate::variational::glorot;
use crate::{Error, Result};

pub trait TestFunction {
    fn dim(&self) -> usize;

    /// Declares the `θ` blocks in `g`.
    fn declare(&self, g: &mut Graph) -> Result<ParamSet>;

    /// `f_θ(z)` as a length-`dim` vector node.
    fn apply(&self, g: &mut Graph, z: NodeId, theta: &ParamSet) -> Result<NodeId>;

    fn init(&self, rng: &mut dyn RngCore) -> Vec<f64>;
}

/// How hidden activations are bounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ClipMode {
    /// Rescale each hidden layer's activation vector into the ℓ₂ ball.
    #[default]
    LayerNorm,
    /// Clamp every unit to `[-bound, bound]`.
    PerUnit,
}

/// `h` if `‖h‖₂ ≤ bound`, else `h · bound / ‖h‖₂`.
pub fn clip_norm(h: &[f64], bound: f64) -> Vec<f64> {
    let n = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n <= bound {
        h.to_vec()
    } else {
        h.iter().map(|v| v * bound / n).collect()
    }
}

/// Tanh MLP with norm-bounded hidden activations and an unclipped affine
/// output layer of the input dimension.
#[derive(Clone, Debug)]
pub struct BoundedMlp {
    pub dim: usize,
    pub hidden: usize,
    pub depth: usize,
    pub bound: f64,
    pub clip: ClipMode,
}

impl BoundedMlp {
    /// Three hidden layers of width `2 · dim`, bound 2.
    pub fn new(dim: usize) -> Self {
        Self { dim, hidden: 2 * dim, depth: 3, bound: 2.0, clip: ClipMode::LayerNorm }
    }

    pub(crate) fn layers(&self) -> Vec<(usize, usize)> {
        let mut layers = Vec::with_capacity(self.depth + 1);
        let mut fan_in = self.dim;
        for _ in 0..self.depth {
            layers.push((self.hidden, fan_in));
            fan_in = self.hidden;
        }
        layers.push((self.dim, fan_in));
        layers
    }

    pub fn param_len(&self) -> usize {
        self.layers().iter().map(|(r, c)| r * c + r).sum()
    }

    /// `d · Π ‖W_l‖_F`, an upper bound on `|∇ᵀf|` everywhere: tanh and the
    /// ball projection are both 1-Lipschitz, so the Jacobian's spectral norm is
    /// at most the product of the weight norms.
    pub fn divergence_bound(&self, theta: &[f64]) -> f64 {
        let mut at = 0;
        let mut prod = 1.0;
        for (rows, cols) in self.layers() {
            let w = &theta[at..at + rows * cols];
            prod *= w.iter().map(|v| v * v).sum::<f64>().sqrt();
            at += rows * cols + rows;
        }
        self.dim as f64 * prod
    }

    /// Nodes for every bounded hidden activation followed by the output.
    pub fn apply_layers(&self, g: &mut Graph, z: NodeId, theta: &ParamSet) -> Result<Vec<NodeId>> {
        let found = g.shape(z).len();
        if found != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found });
        }
        let nodes = theta.nodes();
        let layers = self.layers();
        let mut out = Vec::with_capacity(layers.len());
        let mut h = z;
        for (i, (rows, cols)) in layers.iter().copied().enumerate() {
            let a = g.affine(nodes[2 * i], h, nodes[2 * i + 1], rows, cols)?;
            h = if i + 1 < layers.len() {
                let t = g.tanh(a)?;
                match self.clip {
                    ClipMode::LayerNorm => g.clip_norm(t, self.bound)?,
                    ClipMode::PerUnit => g.clamp(t, self.bound)?,
                }
            } else {
                a
            };
            out.push(h);
        }
        Ok(out)
    }
}

impl TestFunction for BoundedMlp {
    fn dim(&self) -> usize {
        self.dim
    }

    fn declare(&self, g: &mut Graph) -> Result<ParamSet> {
        let mut set = ParamSet::new();
        for (i, (rows, cols)) in self.layers().into_iter().enumerate() {
            set.declare(g, &format!("f.w{i}"), rows * cols)?;
            set.declare(g, &format!("f.b{i}"), rows)?;
        }
        Ok(set)
    }

    fn apply(&self, g: &mut Graph, z: NodeId, theta: &ParamSet) -> Result<NodeId> {
        let layers = self.apply_layers(g, z, theta)?;
        Ok(*layers.last().expect("at least the output layer"))
    }

    fn init(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_len());
        for (rows, cols) in self.layers() {
            out.extend(glorot(rng, rows, cols));
            out.extend(core::iter::repeat_n(0.0, rows));
        }
        out
    }
}

/// `f_θ(z) = θ ⊙ z`.
#[derive(Clone, Debug)]
pub struct LinearTestFunction {
    pub dim: usize,
}

impl TestFunction for LinearTestFunction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn declare(&self, g: &mut Graph) -> Result<ParamSet> {
        let mut set = ParamSet::new();
        set.declare(g, "f.theta", self.dim)?;
        Ok(set)
    }

    fn apply(&self, g: &mut Graph, z: NodeId, theta: &ParamSet) -> Result<NodeId> {
        g.mul(theta.nodes()[0], z)
    }

    fn init(&self, _rng: &mut dyn RngCore) -> Vec<f64> {
        alloc::vec![1.0; self.dim]
    }
}
