//! Minimax stochastic optimization.
//!
//! Each iteration draws fresh, independent sample sets, estimates
//! `∇_λ t(E_q[(O f)(z)])` and `∇_θ t(E_q[(O f)(z)])`, then takes an Adam
//! descent step in `λ` and an Adam ascent step in `θ`. All randomness comes
//! from substreams of the configured seed keyed by iteration and purpose, so a
//! configuration reproduces its trajectory bit for bit.

mod adam;
mod estimator;

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::rng::{substream, StreamRng};
use crate::{Error, Result};

pub use adam::{Adam, AdamConfig};
pub use estimator::{Estimates, Estimator, EstimatorKind, GradEstimate, Problem, SampleSets};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Schedule {
    /// One ascent and one descent step per iteration from the same estimates.
    #[default]
    Simultaneous,
    /// `theta_steps` ascent-only steps, then one descent step, per iteration.
    Alternating { theta_steps: usize },
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    /// Learning rate for the test function parameters `θ`.
    pub lr_f: f64,
    /// Learning rate for the variational parameters `λ`.
    pub lr_q: f64,
    /// Monte Carlo samples per set.
    pub samples: usize,
    pub iterations: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub subsample: Option<usize>,
    pub estimator: EstimatorKind,
    pub schedule: Schedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_f: 2e-4,
            lr_q: 2e-5,
            samples: 100,
            iterations: 1000,
            seed: 0,
            adam: AdamConfig::default(),
            subsample: None,
            estimator: EstimatorKind::Reparam,
            schedule: Schedule::Simultaneous,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_f > 0.0 && self.lr_q > 0.0) {
            return Err(Error::InvalidConfig("learning rates must be positive".into()));
        }
        if self.samples == 0 {
            return Err(Error::InvalidConfig("at least one Monte Carlo sample per set is required".into()));
        }
        if let Schedule::Alternating { theta_steps } = self.schedule {
            if !(1..=MAX_THETA_STEPS).contains(&theta_steps) {
                return Err(Error::InvalidConfig(alloc::format!(
                    "alternating schedule needs between 1 and {MAX_THETA_STEPS} θ steps"
                )));
            }
        }
        Ok(())
    }
}

/// One row of the metrics log.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub iter: u64,
    /// Two-set (unbiased) objective readout before the update.
    pub objective: f64,
    pub grad_norm_lambda: f64,
    pub grad_norm_theta: f64,
    /// `λ` after the update, for low-dimensional latents.
    pub lambda: Option<Vec<f64>>,
}

const INIT: u64 = 0;
const SET_A: u64 = 1;
const SET_B: u64 = 2;

/// Keeps every slot's purposes `1 + 2·slot`, `2 + 2·slot` inside one iteration's
/// block of [`PURPOSES_PER_INDEX`](crate::rng::PURPOSES_PER_INDEX) streams.
pub const MAX_THETA_STEPS: usize = (crate::rng::PURPOSES_PER_INDEX as usize - 3) / 2;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Optimizer state for one run.
pub struct Minimax {
    estimator: Estimator,
    cfg: TrainConfig,
    lambda: Vec<f64>,
    theta: Vec<f64>,
    adam_q: Adam,
    adam_f: Adam,
    iteration: u64,
    log_lambda: bool,
}

impl Minimax {
    /// Random initialization from the configured seed.
    pub fn new(problem: &Problem<'_>, cfg: TrainConfig) -> Result<Self> {
        let mut rng = substream(cfg.seed, 0, INIT);
        let lambda = problem.family.init(&mut rng);
        let theta = problem.test_fn.init(&mut rng);
        Self::with_params(problem, cfg, lambda, theta)
    }

    pub fn with_params(problem: &Problem<'_>, cfg: TrainConfig, lambda: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        let problem = Problem { estimator: cfg.estimator, subsample: cfg.subsample, ..*problem };
        let mut estimator = Estimator::new(&problem)?;
        estimator.set_params(&lambda, &theta)?;
        Ok(Self {
            adam_q: Adam::new(lambda.len(), cfg.lr_q, cfg.adam),
            adam_f: Adam::new(theta.len(), cfg.lr_f, cfg.adam),
            log_lambda: problem.model.latent_dim() <= 4,
            estimator,
            cfg,
            lambda,
            theta,
            iteration: 0,
        })
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn adam_states(&self) -> (&Adam, &Adam) {
        (&self.adam_q, &self.adam_f)
    }

    /// Restores Adam moments (for example from a checkpoint).
    pub fn set_adam_states(&mut self, q: Adam, f: Adam) -> Result<()> {
        if q.m.len() != self.lambda.len() || f.m.len() != self.theta.len() {
            return Err(Error::DimensionMismatch { expected: self.lambda.len(), found: q.m.len() });
        }
        self.adam_q = q;
        self.adam_f = f;
        Ok(())
    }

    pub fn estimator_mut(&mut self) -> &mut Estimator {
        &mut self.estimator
    }

    fn streams(&self, slot: u64) -> (StreamRng, StreamRng) {
        let it = self.iteration + 1;
        (substream(self.cfg.seed, it, SET_A + 2 * slot), substream(self.cfg.seed, it, SET_B + 2 * slot))
    }

    fn estimate(&mut self, slot: u64) -> Result<Estimates> {
        let (mut a, mut b) = self.streams(slot);
        let e = self.estimator.estimate(self.cfg.samples, SampleSets::Independent, &mut a, &mut b)?;
        let finite = e.grad_lambda.iter().chain(&e.grad_theta).all(|v| v.is_finite());
        if !finite || !e.objective.is_finite() {
            return Err(Error::NonFiniteGradient { iteration: self.iteration });
        }
        Ok(e)
    }

    /// One iteration of the configured schedule.
    pub fn step(&mut self) -> Result<Metrics> {
        let uses_f = self.estimator.objective().uses_test_function();
        let e = match self.cfg.schedule {
            Schedule::Simultaneous => {
                let e = self.map_nonfinite(|s| s.estimate(0))?;
                self.adam_q.descend(&mut self.lambda, &e.grad_lambda);
                if uses_f {
                    self.adam_f.ascend(&mut self.theta, &e.grad_theta);
                }
                e
            }
            Schedule::Alternating { theta_steps } => {
                if uses_f {
                    for k in 0..theta_steps {
                        let e = self.map_nonfinite(|s| s.estimate(1 + k as u64))?;
                        self.adam_f.ascend(&mut self.theta, &e.grad_theta);
                        self.estimator.set_params(&self.lambda, &self.theta)?;
                    }
                }
                let e = self.map_nonfinite(|s| s.estimate(0))?;
                self.adam_q.descend(&mut self.lambda, &e.grad_lambda);
                e
            }
        };
        self.estimator.set_params(&self.lambda, &self.theta)?;
        let m = Metrics {
            iter: self.iteration,
            objective: e.objective,
            grad_norm_lambda: norm(&e.grad_lambda),
            grad_norm_theta: norm(&e.grad_theta),
            lambda: self.log_lambda.then(|| self.lambda.clone()),
        };
        self.iteration += 1;
        Ok(m)
    }

    /// Non-finite intermediates during estimation abort with the iteration.
    fn map_nonfinite(&mut self, f: impl FnOnce(&mut Self) -> Result<Estimates>) -> Result<Estimates> {
        let iteration = self.iteration;
        f(self).map_err(|e| match e {
            Error::NonFiniteIntermediate { .. } => Error::NonFiniteGradient { iteration },
            other => other,
        })
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub lambda: Vec<f64>,
    pub theta: Vec<f64>,
    pub log: Vec<Metrics>,
}

/// Runs `cfg.iterations` minimax steps from a seeded random initialization.
pub fn run_minimax(problem: &Problem<'_>, cfg: &TrainConfig) -> Result<RunOutput> {
    let mut mm = Minimax::new(problem, cfg.clone())?;
    run_from(&mut mm, cfg.iterations)
}

/// Runs `iterations` more steps of an existing optimizer.
pub fn run_from(mm: &mut Minimax, iterations: usize) -> Result<RunOutput> {
    let mut log = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        log.push(mm.step()?);
    }
    Ok(RunOutput { lambda: mm.lambda.clone(), theta: mm.theta.clone(), log })
}
