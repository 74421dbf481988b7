//! Two-component Gaussian mixture target: fit, histogram and density table.

use std::path::{Path, PathBuf};

use opvi_core::models::MixtureTarget;
use opvi_core::operators::sample_family;
use opvi_core::optimizer::{Minimax, Problem};
use opvi_core::rng::substream;
use serde::Serialize;

use super::{initial_params, save_state, write_csv, write_json, Family, MetricsWriter, PURPOSE_SAMPLES};
use crate::config::{ExperimentConfig, ExperimentKind, HistogramConfig};
use crate::error::{Error, Result};
use crate::format::Checkpoint;

/// Mass fractions of the fitted `q`, estimated from the histogram draws.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixtureSummary {
    pub samples: usize,
    /// `|z + 3| < 1.5`.
    pub near_negative_mode: f64,
    /// `|z − 3| < 1.5`.
    pub near_positive_mode: f64,
    /// `z < 0`.
    pub below_zero: f64,
    /// `z > 0`.
    pub above_zero: f64,
    /// `z < −1`.
    pub below_minus_one: f64,
    /// `z > 1`.
    pub above_one: f64,
    pub mean: f64,
}

impl MixtureSummary {
    pub fn from_samples(z: &[f64]) -> Self {
        let n = z.len() as f64;
        let frac = |p: &dyn Fn(f64) -> bool| z.iter().filter(|&&v| p(v)).count() as f64 / n;
        Self {
            samples: z.len(),
            near_negative_mode: frac(&|v| (v + 3.0).abs() < 1.5),
            near_positive_mode: frac(&|v| (v - 3.0).abs() < 1.5),
            below_zero: frac(&|v| v < 0.0),
            above_zero: frac(&|v| v > 0.0),
            below_minus_one: frac(&|v| v < -1.0),
            above_one: frac(&|v| v > 1.0),
            mean: z.iter().sum::<f64>() / n,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MixtureOutcome {
    pub family: &'static str,
    pub lambda: Vec<f64>,
    pub summary: MixtureSummary,
    #[serde(skip)]
    pub theta: Vec<f64>,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

/// Counts per bin. Draws outside `[lo, hi)` are counted in the end bins so
/// the counts always sum to the number of draws.
pub fn histogram(z: &[f64], h: &HistogramConfig) -> Vec<u64> {
    let mut counts = vec![0u64; h.bins];
    let width = (h.hi - h.lo) / h.bins as f64;
    for &v in z {
        let i = ((v - h.lo) / width).floor();
        let i = if i.is_nan() { 0 } else { (i.max(0.0) as usize).min(h.bins - 1) };
        counts[i] += 1;
    }
    counts
}

/// Bin edges `lo + i · (hi − lo) / bins`.
pub fn bin_edges(h: &HistogramConfig) -> Vec<f64> {
    (0..=h.bins).map(|i| h.lo + (h.hi - h.lo) * i as f64 / h.bins as f64).collect()
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Target probability of each bin.
pub fn target_bin_mass(target: &MixtureTarget, h: &HistogramConfig) -> Vec<f64> {
    let edges = bin_edges(h);
    let cdf =
        |x: f64| (0..2).map(|k| target.weights[k] * normal_cdf((x - target.means[k]) / target.sds[k])).sum::<f64>();
    edges.windows(2).map(|e| cdf(e[1]) - cdf(e[0])).collect()
}

/// Draws from `q`, then writes `histogram.csv`, `density.csv` and `summary.json`.
pub fn evaluate(
    cfg: &ExperimentConfig,
    family: &Family,
    lambda: &[f64],
    seed: u64,
    dir: &Path,
) -> Result<MixtureSummary> {
    let h = &cfg.histogram;
    let mut rng = substream(seed, 0, PURPOSE_SAMPLES);
    let z: Vec<f64> = sample_family(family.as_dyn(), lambda, h.samples, &mut rng)?.into_iter().map(|v| v[0]).collect();
    write_histogram(&dir.join("histogram.csv"), &z, h)?;

    let target = MixtureTarget::default();
    let edges = bin_edges(h);
    let mass = target_bin_mass(&target, h);
    write_csv(
        &dir.join("density.csv"),
        &["bin_lo", "bin_hi", "center", "density", "bin_mass", "expected_count"],
        edges.windows(2).zip(&mass).map(|(e, &m)| {
            let c = 0.5 * (e[0] + e[1]);
            vec![
                e[0].to_string(),
                e[1].to_string(),
                c.to_string(),
                target.density(c).to_string(),
                m.to_string(),
                (m * h.samples as f64).to_string(),
            ]
        }),
    )?;
    Ok(MixtureSummary::from_samples(&z))
}

pub fn write_histogram(path: &Path, z: &[f64], h: &HistogramConfig) -> Result<()> {
    let counts = histogram(z, h);
    let edges = bin_edges(h);
    write_csv(
        path,
        &["bin_lo", "bin_hi", "count"],
        edges.windows(2).zip(&counts).map(|(e, c)| vec![e[0].to_string(), e[1].to_string(), c.to_string()]),
    )
}

/// Fits `q` to the mixture and writes metrics, checkpoint, histogram and summary.
pub fn run(cfg: &ExperimentConfig) -> Result<MixtureOutcome> {
    if cfg.experiment != ExperimentKind::Mixture {
        return Err(Error::Config("not a mixture experiment".into()));
    }
    let dir = cfg.prepare_output()?;
    let target = MixtureTarget::default();
    let family = Family::new(cfg.family, 1);
    let f = cfg.test_function.build(1);
    let problem = Problem::new(&target, family.as_dyn(), &f, cfg.objective.objective());
    let (lambda, theta) = initial_params(cfg, &family, &f, cfg.train.seed);
    let mut mm = Minimax::with_params(&problem, cfg.train.clone(), lambda, theta)?;

    let mut metrics = MetricsWriter::create(&dir.join("metrics.csv"), Some(mm.lambda().len()))?;
    for _ in 0..cfg.train.iterations {
        let m = mm.step()?;
        metrics.write(&m)?;
    }
    metrics.finish()?;

    let mut cp = Checkpoint::new();
    cp.insert("family", family.encode());
    save_state(&mut cp, &mm, "");
    cp.write(&dir.join("checkpoint.opvc"))?;

    let summary = evaluate(cfg, &family, mm.lambda(), cfg.train.seed, dir)?;
    let outcome = MixtureOutcome {
        family: cfg.family.name(),
        lambda: mm.lambda().to_vec(),
        theta: mm.theta().to_vec(),
        summary,
        output_dir: dir.to_path_buf(),
    };
    write_json(&dir.join("summary.json"), &outcome)?;
    Ok(outcome)
}

/// Re-evaluates a saved fit.
pub fn eval(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<MixtureSummary> {
    let cp = Checkpoint::read(checkpoint)?;
    let family = Family::decode(cp.require("family", checkpoint)?, checkpoint)?;
    let lambda = cp.require("lambda", checkpoint)?;
    let dir = cfg.prepare_output()?;
    let summary = evaluate(cfg, &family, lambda, cfg.train.seed, dir)?;
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}
