//! Operators `(O^{p,q} f)(z)` and the distance `t`.
//!
//! The Langevin-Stein operator `∇_z log p(x, z)ᵀ f(z) + ∇ᵀf(z)` needs only the
//! unnormalized log joint and no density of `q`. The KL operator
//! `log q(z) − log p(x, z)` ignores the test function and needs `log q`. The
//! discrete operator works on tabulated probabilities over `{0, …, c}`.

use alloc::vec::Vec;

use rand::RngCore;

use crate::autodiff::{Bindings, Evaluator, Graph, NodeId, ParamSet, Shape};
use crate::models::{Model, Support};
use crate::testfn::TestFunction;
use crate::variational::VariationalFamily;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    LangevinStein,
    Kl,
    Discrete,
    /// Not implemented.
    RenyiAlpha,
    /// Not implemented.
    Chi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Distance {
    /// `t(a) = a²`.
    Square,
    /// `t(a) = a`.
    Identity,
}

impl Distance {
    pub fn apply(self, a: f64) -> f64 {
        match self {
            Distance::Square => a * a,
            Distance::Identity => a,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OperatorObjective {
    kind: OperatorKind,
    distance: Distance,
}

impl OperatorObjective {
    pub fn new(kind: OperatorKind, distance: Distance) -> Result<Self> {
        match (kind, distance) {
            (OperatorKind::LangevinStein, Distance::Square)
            | (OperatorKind::Kl, Distance::Identity)
            | (OperatorKind::Discrete, Distance::Square) => Ok(Self { kind, distance }),
            (OperatorKind::RenyiAlpha, _) => Err(Error::NotImplemented("the Rényi-α operator")),
            (OperatorKind::Chi, _) => Err(Error::NotImplemented("the χ operator")),
            (kind, distance) => Err(Error::IncompatibleObjective(alloc::format!(
                "{kind:?} operator cannot use the {distance:?} distance"
            ))),
        }
    }

    pub fn langevin_stein() -> Self {
        Self { kind: OperatorKind::LangevinStein, distance: Distance::Square }
    }

    pub fn kl() -> Self {
        Self { kind: OperatorKind::Kl, distance: Distance::Identity }
    }

    pub fn discrete() -> Self {
        Self { kind: OperatorKind::Discrete, distance: Distance::Square }
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn distance(&self) -> Distance {
        self.distance
    }

    pub fn requires_q_density(&self) -> bool {
        self.kind == OperatorKind::Kl
    }

    pub fn uses_test_function(&self) -> bool {
        self.kind != OperatorKind::Kl
    }

    /// Checks the model's support against the operator.
    pub fn check_model(&self, m: &dyn Model) -> Result<()> {
        match (self.kind, m.support()) {
            (OperatorKind::Discrete, Support::ContinuousReals) => {
                Err(Error::IncompatibleObjective("the discrete operator needs a discrete model".into()))
            }
            (OperatorKind::LangevinStein, Support::DiscreteRange(_)) => Err(Error::DiscreteModelWithLsOperator),
            (OperatorKind::Kl, Support::DiscreteRange(_)) => {
                Err(Error::IncompatibleObjective("the KL operator needs a continuous model".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn check_family(&self, q: &dyn VariationalFamily) -> Result<()> {
        if self.requires_q_density() && !q.has_density() {
            return Err(Error::DensityUnavailable);
        }
        Ok(())
    }
}

/// `∇_z log_joint ᵀ f + ∇ᵀf` from an already-built log joint and `f(z)`.
pub fn apply_ls(g: &mut Graph, log_joint: NodeId, z: NodeId, fz: NodeId) -> Result<NodeId> {
    let (nz, nf) = (g.shape(z).len(), g.shape(fz).len());
    if nz != nf {
        return Err(Error::DimensionMismatch { expected: nz, found: nf });
    }
    let s = g.grad(log_joint, z)?;
    let drift = g.dot(s, fz)?;
    let div = g.divergence(fz, z)?;
    g.add(drift, div)
}

/// Langevin-Stein operator for a model and test function at `z`.
pub fn apply_ls_model(
    g: &mut Graph,
    m: &dyn Model,
    f: &dyn TestFunction,
    theta: &ParamSet,
    z: NodeId,
    scale: f64,
) -> Result<NodeId> {
    if let Support::DiscreteRange(_) = m.support() {
        return Err(Error::DiscreteModelWithLsOperator);
    }
    if f.dim() != m.latent_dim() {
        return Err(Error::DimensionMismatch { expected: m.latent_dim(), found: f.dim() });
    }
    let lj = m.log_joint(g, z, scale)?;
    let fz = f.apply(g, z, theta)?;
    apply_ls(g, lj, z, fz)
}

/// `log q(z; λ) − log p(x, z)`.
pub fn apply_kl(
    g: &mut Graph,
    log_joint: NodeId,
    q: &dyn VariationalFamily,
    lambda: &ParamSet,
    z: NodeId,
) -> Result<NodeId> {
    let lq = q.log_density(g, z, lambda)?;
    g.sub(lq, log_joint)
}

/// Discrete operator `[f(z+1) p(z+1) − f(z) p(z)] / p(z)` on `{0, …, c}` with
/// `f(c+1) p(c+1) ≡ 0`. `weights[z]` is the unnormalized `p(z, x)`; `f` is
/// tabulated on the same support and must vanish at 0.
pub fn apply_discrete(weights: &[f64], f: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != f.len() {
        return Err(Error::DimensionMismatch { expected: weights.len(), found: f.len() });
    }
    if f.first().is_some_and(|&v| v != 0.0) {
        return Err(Error::FZeroNonzero);
    }
    if let Some(z) = weights.iter().position(|&w| !(w > 0.0)) {
        return Err(Error::ZeroProbabilityPoint(z));
    }
    let c = weights.len();
    Ok((0..c)
        .map(|z| {
            let next = if z + 1 < c { f[z + 1] * weights[z + 1] } else { 0.0 };
            (next - f[z] * weights[z]) / weights[z]
        })
        .collect())
}

/// `t` applied to the sample mean of operator values.
///
/// With `t = square` this plug-in is biased for finite samples; unbiased
/// readouts use two independent sets, see [`two_set_objective`].
pub fn objective_estimate(distance: Distance, values: &[f64]) -> f64 {
    distance.apply(mean(values))
}

/// Unbiased readout: `mean(A) · mean(B)` for the square distance, `mean(B)`
/// for the identity.
pub fn two_set_objective(distance: Distance, set_a: &[f64], set_b: &[f64]) -> f64 {
    match distance {
        Distance::Square => mean(set_a) * mean(set_b),
        Distance::Identity => mean(set_b),
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Builds the operator graph at `z` for the given objective.
#[allow(clippy::too_many_arguments)]
pub fn build_operator(
    g: &mut Graph,
    objective: OperatorObjective,
    log_joint: NodeId,
    z: NodeId,
    f: &dyn TestFunction,
    theta: &ParamSet,
    q: &dyn VariationalFamily,
    lambda: &ParamSet,
) -> Result<NodeId> {
    match objective.kind() {
        OperatorKind::LangevinStein => {
            let fz = f.apply(g, z, theta)?;
            apply_ls(g, log_joint, z, fz)
        }
        OperatorKind::Kl => apply_kl(g, log_joint, q, lambda, z),
        OperatorKind::Discrete => Err(Error::OperatorNotDifferentiable),
        OperatorKind::RenyiAlpha => Err(Error::NotImplemented("the Rényi-α operator")),
        OperatorKind::Chi => Err(Error::NotImplemented("the χ operator")),
    }
}

/// Evaluates `(O f)(z)` at caller-supplied latent points for fixed `λ`, `θ`.
pub struct OperatorProbe {
    graph: Graph,
    z_var: crate::autodiff::VarId,
    op: NodeId,
    eval: Evaluator,
    bindings: Bindings,
    objective: OperatorObjective,
}

impl OperatorProbe {
    pub fn new(
        m: &dyn Model,
        objective: OperatorObjective,
        q: &dyn VariationalFamily,
        f: &dyn TestFunction,
        lambda: &[f64],
        theta: &[f64],
    ) -> Result<Self> {
        objective.check_model(m)?;
        objective.check_family(q)?;
        let mut g = Graph::new();
        let lam = q.declare(&mut g)?;
        let th = f.declare(&mut g)?;
        let z = g.input("z", Shape::Vector(m.latent_dim()))?;
        let lj = m.log_joint(&mut g, z, 1.0)?;
        let op = build_operator(&mut g, objective, lj, z, f, &th, q, &lam)?;
        let mut bindings = Bindings::new();
        lam.bind(&mut bindings, lambda)?;
        th.bind(&mut bindings, theta)?;
        let eval = Evaluator::new(&g, &[op]);
        let z_var = g.var_id("z").expect("declared above");
        Ok(Self { graph: g, z_var, op, eval, bindings, objective })
    }

    pub fn value_at(&mut self, z: &[f64]) -> Result<f64> {
        self.bindings.set(self.z_var, z);
        self.eval.run(&self.graph, &self.bindings)?;
        Ok(self.eval.scalar(self.op))
    }

    pub fn values(&mut self, samples: &[Vec<f64>]) -> Result<Vec<f64>> {
        samples.iter().map(|z| self.value_at(z)).collect()
    }

    /// `t(mean of (O f)(zⱼ))` over the given samples.
    pub fn objective_estimate(&mut self, samples: &[Vec<f64>]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let v = self.values(samples)?;
        Ok(objective_estimate(self.objective.distance(), &v))
    }
}

/// Draws `n` samples of `q` at fixed `λ`.
pub fn sample_family(
    q: &dyn VariationalFamily,
    lambda: &[f64],
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<Vec<f64>>> {
    let mut sampler = FamilySampler::new(q, lambda)?;
    (0..n).map(|_| sampler.draw(rng)).collect()
}

/// Reusable sampler for one family at fixed `λ`.
pub struct FamilySampler {
    graph: Graph,
    eps_var: crate::autodiff::VarId,
    z: NodeId,
    eval: Evaluator,
    bindings: Bindings,
    noise: Vec<f64>,
}

impl FamilySampler {
    pub fn new(q: &dyn VariationalFamily, lambda: &[f64]) -> Result<Self> {
        let mut g = Graph::new();
        let lam = q.declare(&mut g)?;
        let eps = g.input("eps", Shape::Vector(q.noise_dim()))?;
        let z = q.sample(&mut g, eps, &lam)?;
        let mut bindings = Bindings::new();
        lam.bind(&mut bindings, lambda)?;
        let eval = Evaluator::new(&g, &[z]);
        let eps_var = g.var_id("eps").expect("declared above");
        Ok(Self { graph: g, eps_var, z, eval, bindings, noise: alloc::vec![0.0; q.noise_dim()] })
    }

    pub fn draw(&mut self, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        crate::rng::fill_normal(rng, &mut self.noise);
        self.from_noise_inner()
    }

    pub fn from_noise(&mut self, eps: &[f64]) -> Result<Vec<f64>> {
        self.noise.copy_from_slice(eps);
        self.from_noise_inner()
    }

    fn from_noise_inner(&mut self) -> Result<Vec<f64>> {
        self.bindings.set(self.eps_var, &self.noise);
        self.eval.run(&self.graph, &self.bindings)?;
        Ok(self.eval.value(self.z).to_vec())
    }
}
