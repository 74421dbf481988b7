use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::autodiff::{Bindings, Evaluator, Graph, NodeId, ParamSet, Shape, VarId};
use crate::models::{weighted_log_joint, Model};
use crate::operators::{build_operator, mean, Distance, OperatorObjective};
use crate::rng::{choose_distinct, fill_normal};
use crate::testfn::TestFunction;
use crate::variational::{score, VariationalFamily};
use crate::{Error, Result};

/// How `∇_λ E_q[(O f)(z)]` is estimated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EstimatorKind {
    /// `E[∇_λ log q · (O f) + ∇_λ (O f)]` at fixed samples.
    Score,
    /// `E_ε[∇_λ (O f)(R(ε; λ))]`.
    #[default]
    Reparam,
}

/// Whether the two expectations in the gradient share samples. Only
/// [`SampleSets::Independent`] is unbiased for the square distance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SampleSets {
    #[default]
    Independent,
    Shared,
}

/// Everything a run needs besides the numbers.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub model: &'a dyn Model,
    pub family: &'a dyn VariationalFamily,
    pub test_fn: &'a dyn TestFunction,
    pub objective: OperatorObjective,
    pub estimator: EstimatorKind,
    /// Minibatch size for hierarchical models; `None` uses all data.
    pub subsample: Option<usize>,
}

impl<'a> Problem<'a> {
    pub fn new(
        model: &'a dyn Model,
        family: &'a dyn VariationalFamily,
        test_fn: &'a dyn TestFunction,
        objective: OperatorObjective,
    ) -> Self {
        Self { model, family, test_fn, objective, estimator: EstimatorKind::Reparam, subsample: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradEstimate {
    pub gradient: Vec<f64>,
    /// Samples per set.
    pub samples: usize,
    pub kind: EstimatorKind,
    /// Mean operator value of set A and set B.
    pub set_means: [f64; 2],
}

/// Both gradients and the objective readout from one pair of sample sets.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimates {
    pub grad_lambda: Vec<f64>,
    pub grad_theta: Vec<f64>,
    pub set_means: [f64; 2],
    /// Unbiased estimate of `t(E_q[(O f)(z)])`.
    pub objective: f64,
}

/// Compiled gradient estimator for one [`Problem`].
///
/// The graph is built once: it maps a noise draw (and, under subsampling, a
/// vector of per-point weights) to the operator value and its gradients with
/// respect to the flat `λ` and `θ`.
pub struct Estimator {
    graph: Graph,
    objective: OperatorObjective,
    kind: EstimatorKind,
    lambda: ParamSet,
    theta: ParamSet,
    noise_var: VarId,
    noise: Vec<f64>,
    /// Under the score estimator `z` is an input filled from `sampler`.
    z_var: Option<VarId>,
    sampler: Option<(NodeId, Evaluator)>,
    weights: Option<(VarId, usize, usize)>,
    weight_buf: Vec<f64>,
    op: NodeId,
    grad_lambda: NodeId,
    grad_theta: NodeId,
    value_eval: Evaluator,
    full_eval: Evaluator,
    bindings: Bindings,
}

impl Estimator {
    pub fn new(p: &Problem<'_>) -> Result<Self> {
        let Problem { model, family, test_fn, objective, estimator: kind, subsample } = *p;
        objective.check_model(model)?;
        objective.check_family(family)?;
        if family.dim() != model.latent_dim() {
            return Err(Error::DimensionMismatch { expected: model.latent_dim(), found: family.dim() });
        }
        if test_fn.dim() != model.latent_dim() {
            return Err(Error::DimensionMismatch { expected: model.latent_dim(), found: test_fn.dim() });
        }
        if kind == EstimatorKind::Score && !family.has_density() {
            return Err(Error::ScoreUnavailable);
        }

        let mut g = Graph::new();
        let lambda = family.declare(&mut g)?;
        let theta = test_fn.declare(&mut g)?;
        let eps = g.input("eps", Shape::Vector(family.noise_dim()))?;
        let z_sample = family.sample(&mut g, eps, &lambda)?;
        let z = match kind {
            EstimatorKind::Reparam => z_sample,
            EstimatorKind::Score => g.input("z", Shape::Vector(model.latent_dim()))?,
        };

        let mut weights = None;
        let log_joint = match subsample {
            Some(m) => {
                let h = model.as_hierarchical().ok_or(Error::NotHierarchical)?;
                let n = h.num_points();
                if m == 0 || m > n {
                    return Err(Error::InvalidConfig(format!("subsample size {m} not in 1..={n}")));
                }
                let w = g.input("data_weights", Shape::Vector(n))?;
                weights = Some((g.var_id("data_weights").expect("declared above"), n, m));
                weighted_log_joint(h, &mut g, z, w)?
            }
            None => model.log_joint(&mut g, z, 1.0)?,
        };

        let op = build_operator(&mut g, objective, log_joint, z, test_fn, &theta, family, &lambda)?;
        let grad_lambda = match kind {
            EstimatorKind::Reparam => lambda.gradient(&mut g, op)?,
            EstimatorKind::Score => {
                let sc = score(family, &mut g, z, &lambda)?;
                let weighted = g.scale(op, sc)?;
                let direct = lambda.gradient(&mut g, op)?;
                g.add(weighted, direct)?
            }
        };
        let grad_theta = theta.gradient(&mut g, op)?;

        let value_eval = Evaluator::new(&g, &[op]);
        let full_eval = Evaluator::new(&g, &[op, grad_lambda, grad_theta]);
        let sampler = match kind {
            EstimatorKind::Score => Some((z_sample, Evaluator::new(&g, &[z_sample]))),
            EstimatorKind::Reparam => None,
        };
        let noise_var = g.var_id("eps").expect("declared above");
        let z_var = g.var_id("z").filter(|_| kind == EstimatorKind::Score);
        let mut bindings = Bindings::new();
        if let Some((var, n, _)) = weights {
            bindings.set(var, &vec![1.0; n]);
        }
        Ok(Self {
            noise: vec![0.0; family.noise_dim()],
            weight_buf: weights.map_or(Vec::new(), |(_, n, _)| vec![0.0; n]),
            graph: g,
            objective,
            kind,
            lambda,
            theta,
            noise_var,
            z_var,
            sampler,
            weights,
            op,
            grad_lambda,
            grad_theta,
            value_eval,
            full_eval,
            bindings,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn objective(&self) -> OperatorObjective {
        self.objective
    }

    pub fn lambda_len(&self) -> usize {
        self.lambda.len()
    }

    pub fn theta_len(&self) -> usize {
        self.theta.len()
    }

    pub fn set_params(&mut self, lambda: &[f64], theta: &[f64]) -> Result<()> {
        self.lambda.bind(&mut self.bindings, lambda)?;
        self.theta.bind(&mut self.bindings, theta)
    }

    /// Draws a minibatch for one sample set and binds its weights.
    fn draw_batch(&mut self, rng: &mut dyn RngCore) {
        if let Some((var, n, m)) = self.weights {
            let batch = choose_distinct(rng, n, m);
            self.weight_buf.iter_mut().for_each(|w| *w = 0.0);
            let scale = n as f64 / m as f64;
            for i in batch {
                self.weight_buf[i] = scale;
            }
            self.bindings.set(var, &self.weight_buf);
        }
    }

    fn draw_noise(&mut self, rng: &mut dyn RngCore) -> Result<()> {
        fill_normal(rng, &mut self.noise);
        self.bindings.set(self.noise_var, &self.noise);
        if let (Some((z, sampler)), Some(z_var)) = (self.sampler.as_mut(), self.z_var) {
            sampler.run(&self.graph, &self.bindings)?;
            let value = sampler.value(*z).to_vec();
            self.bindings.set(z_var, &value);
        }
        Ok(())
    }

    /// Operator values at `m` fresh draws.
    pub fn operator_values(&mut self, m: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        self.draw_batch(rng);
        let mut out = Vec::with_capacity(m);
        for _ in 0..m {
            self.draw_noise(rng)?;
            self.value_eval.run(&self.graph, &self.bindings)?;
            out.push(self.value_eval.scalar(self.op));
        }
        Ok(out)
    }

    /// Mean operator value and mean gradients over `m` fresh draws.
    fn gradient_set(&mut self, m: usize, rng: &mut dyn RngCore) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        self.draw_batch(rng);
        let mut value = 0.0;
        let mut gl = vec![0.0; self.lambda.len()];
        let mut gt = vec![0.0; self.theta.len()];
        for _ in 0..m {
            self.draw_noise(rng)?;
            self.full_eval.run(&self.graph, &self.bindings)?;
            value += self.full_eval.scalar(self.op);
            for (a, v) in gl.iter_mut().zip(self.full_eval.value(self.grad_lambda)) {
                *a += v;
            }
            for (a, v) in gt.iter_mut().zip(self.full_eval.value(self.grad_theta)) {
                *a += v;
            }
        }
        let inv = 1.0 / m as f64;
        gl.iter_mut().for_each(|v| *v *= inv);
        gt.iter_mut().for_each(|v| *v *= inv);
        Ok((value * inv, gl, gt))
    }

    /// Gradients of `t(E_q[(O f)(z)])` in `λ` and `θ`, from set A (outer mean)
    /// and set B (gradient mean), each of `m` draws.
    pub fn estimate(
        &mut self,
        m: usize,
        sets: SampleSets,
        rng_a: &mut dyn RngCore,
        rng_b: &mut dyn RngCore,
    ) -> Result<Estimates> {
        if m == 0 {
            return Err(Error::InvalidConfig("at least one sample per set is required".into()));
        }
        let (mean_b, mut gl, mut gt) = self.gradient_set(m, rng_b)?;
        let (mean_a, objective) = match self.objective.distance() {
            Distance::Identity => (mean_b, mean_b),
            Distance::Square => {
                let mean_a = match sets {
                    SampleSets::Independent => mean(&self.operator_values(m, rng_a)?),
                    SampleSets::Shared => mean_b,
                };
                let factor = 2.0 * mean_a;
                gl.iter_mut().for_each(|v| *v *= factor);
                gt.iter_mut().for_each(|v| *v *= factor);
                (mean_a, mean_a * mean_b)
            }
        };
        Ok(Estimates { grad_lambda: gl, grad_theta: gt, set_means: [mean_a, mean_b], objective })
    }

    pub fn estimate_grad_lambda(&mut self, m: usize, rng: &mut dyn RngCore) -> Result<GradEstimate> {
        self.single(m, rng, true)
    }

    pub fn estimate_grad_theta(&mut self, m: usize, rng: &mut dyn RngCore) -> Result<GradEstimate> {
        self.single(m, rng, false)
    }

    fn single(&mut self, m: usize, rng: &mut dyn RngCore, lambda: bool) -> Result<GradEstimate> {
        // Set A runs on its own stream seeded from `rng`.
        let mut a = crate::rng::substream(rng.next_u64(), 0, 0);
        let e = self.estimate(m, SampleSets::Independent, &mut a, rng)?;
        Ok(GradEstimate {
            gradient: if lambda { e.grad_lambda } else { e.grad_theta },
            samples: m,
            kind: self.kind,
            set_means: e.set_means,
        })
    }
}
