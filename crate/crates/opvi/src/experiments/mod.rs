//! Config-driven experiments.

pub mod lfa;
pub mod mixture;

use std::fs::File;
use std::path::Path;
use std::time::Instant;

use opvi_core::optimizer::{Adam, Metrics, Minimax};
use opvi_core::rng::{normal, substream};
use opvi_core::testfn::TestFunction;
use opvi_core::variational::{MeanFieldGaussian, SignSplitProgram, VariationalFamily, VariationalProgram};

use crate::config::{ExperimentConfig, FamilyKind};
use crate::error::{Error, Result};
use crate::format::Checkpoint;

/// Substream purposes at index 0, next to the optimizer's initialization.
pub(crate) const PURPOSE_INIT_MEAN: u64 = 1;
pub(crate) const PURPOSE_SAMPLES: u64 = 2;

/// A concrete variational family.
#[derive(Clone, Debug)]
pub enum Family {
    Gaussian(MeanFieldGaussian),
    SignSplit(SignSplitProgram),
    Program(VariationalProgram),
}

impl Family {
    pub fn new(kind: FamilyKind, dim: usize) -> Self {
        match kind {
            FamilyKind::Gaussian => Family::Gaussian(MeanFieldGaussian::new(dim)),
            FamilyKind::SignSplit => Family::SignSplit(SignSplitProgram),
            FamilyKind::Program => Family::Program(VariationalProgram::for_latent(dim)),
        }
    }

    pub fn as_dyn(&self) -> &dyn VariationalFamily {
        match self {
            Family::Gaussian(q) => q,
            Family::SignSplit(q) => q,
            Family::Program(q) => q,
        }
    }

    /// `[code, dim, noise_dim, hidden]` for the checkpoint's `family` section.
    pub fn encode(&self) -> Vec<f64> {
        match self {
            Family::Gaussian(q) => vec![0.0, q.dim as f64, q.dim as f64, 0.0],
            Family::SignSplit(_) => vec![1.0, 1.0, 3.0, 0.0],
            Family::Program(q) => vec![2.0, q.dim as f64, q.noise_dim as f64, q.hidden as f64],
        }
    }

    pub fn decode(v: &[f64], path: &Path) -> Result<Self> {
        let bad = || Error::Format { path: path.to_path_buf(), message: format!("bad family section {v:?}") };
        let [code, dim, noise, hidden] = v else { return Err(bad()) };
        let as_usize = |x: f64| (x >= 0.0 && x.fract() == 0.0).then_some(x as usize).ok_or_else(bad);
        let (dim, noise_dim, hidden) = (as_usize(*dim)?, as_usize(*noise)?, as_usize(*hidden)?);
        match *code as i64 {
            0 => Ok(Family::Gaussian(MeanFieldGaussian::new(dim))),
            1 => Ok(Family::SignSplit(SignSplitProgram)),
            2 => Ok(Family::Program(VariationalProgram { noise_dim, hidden, dim })),
            _ => Err(bad()),
        }
    }
}

/// Initial `(λ, θ)` in the optimizer's own order, with the Gaussian mean
/// optionally perturbed by `init_mean_sd · N(0, 1)`.
pub fn initial_params(
    cfg: &ExperimentConfig,
    family: &Family,
    f: &dyn TestFunction,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let mut rng = substream(seed, 0, 0);
    let mut lambda = family.as_dyn().init(&mut rng);
    let theta = f.init(&mut rng);
    if let Family::Gaussian(q) = family {
        if cfg.init_mean_sd > 0.0 {
            let mut r = substream(seed, 0, PURPOSE_INIT_MEAN);
            for m in &mut lambda[..q.dim] {
                *m += cfg.init_mean_sd * normal(&mut r);
            }
        }
    }
    (lambda, theta)
}

/// Metrics CSV: `iter,objective,grad_norm_lambda,grad_norm_theta,wall_ms`
/// followed by `lambda_<i>` columns when `λ` is logged.
pub struct MetricsWriter {
    out: csv::Writer<File>,
    lambda_len: Option<usize>,
    start: Instant,
}

impl MetricsWriter {
    pub fn create(path: &Path, lambda_len: Option<usize>) -> Result<Self> {
        let mut out = csv::Writer::from_path(path)?;
        let mut header: Vec<String> =
            ["iter", "objective", "grad_norm_lambda", "grad_norm_theta", "wall_ms"].map(String::from).to_vec();
        header.extend((0..lambda_len.unwrap_or(0)).map(|i| format!("lambda_{i}")));
        out.write_record(&header)?;
        Ok(Self { out, lambda_len, start: Instant::now() })
    }

    pub fn write(&mut self, m: &Metrics) -> Result<()> {
        let wall_ms = self.start.elapsed().as_secs_f64() * 1e3;
        let mut row = vec![
            m.iter.to_string(),
            m.objective.to_string(),
            m.grad_norm_lambda.to_string(),
            m.grad_norm_theta.to_string(),
            format!("{wall_ms:.3}"),
        ];
        if self.lambda_len.is_some() {
            row.extend(m.lambda.iter().flatten().map(f64::to_string));
        }
        self.out.write_record(&row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::Csv(e.into()))
    }
}

/// Stores `λ`, `θ` and both Adam states under names ending in `suffix`.
pub fn save_state(cp: &mut Checkpoint, mm: &Minimax, suffix: &str) {
    cp.insert(format!("lambda{suffix}"), mm.lambda().to_vec());
    cp.insert(format!("theta{suffix}"), mm.theta().to_vec());
    let (q, f) = mm.adam_states();
    for (tag, adam) in [("q", q), ("f", f)] {
        cp.insert(format!("adam.{tag}.m{suffix}"), adam.m.clone());
        cp.insert(format!("adam.{tag}.v{suffix}"), adam.v.clone());
        cp.insert(format!("adam.{tag}.t{suffix}"), vec![adam.t as f64]);
    }
}

/// The Adam state saved by [`save_state`].
pub fn load_adam(
    cp: &Checkpoint,
    tag: &str,
    suffix: &str,
    lr: f64,
    cfg: &ExperimentConfig,
    path: &Path,
) -> Result<Adam> {
    let m = cp.require(&format!("adam.{tag}.m{suffix}"), path)?.to_vec();
    let v = cp.require(&format!("adam.{tag}.v{suffix}"), path)?.to_vec();
    let t = cp.require(&format!("adam.{tag}.t{suffix}"), path)?.first().copied().unwrap_or(0.0) as u64;
    Ok(Adam { lr, config: cfg.train.adam, m, v, t })
}

/// Writes `rows` under `header` as CSV.
pub(crate) fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))
}

pub(crate) fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").map_err(Error::io(path))
}
