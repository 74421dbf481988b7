//! Logistic factor analysis: image completion from per-image posteriors.
//!
//! For every test image half of the pixels are held out by a seeded mask. A
//! posterior over the latent code is fit to the observed half, and the held-out
//! half is scored under the posterior predictive.

use std::path::{Path, PathBuf};

use opvi_core::models::lfa::{pretrain as pretrain_model, LfaPosterior};
use opvi_core::models::LogisticFactorAnalysis;
use opvi_core::operators::sample_family;
use opvi_core::optimizer::{Minimax, Problem};
use opvi_core::predictive::{half_mask, posterior_predictive_loglik};
use opvi_core::rng::substream;
use rand::RngCore;
use serde::Serialize;

use super::{initial_params, save_state, write_csv, write_json, Family, MetricsWriter, PURPOSE_SAMPLES};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::format::{Checkpoint, ImageMatrix};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImageCompletion {
    pub image: usize,
    pub held_out: usize,
    /// Completion log-likelihood under the initial `q`.
    pub loglik_init: f64,
    /// Completion log-likelihood under the fitted `q`.
    pub loglik: f64,
}

impl ImageCompletion {
    pub fn per_pixel(&self) -> f64 {
        if self.held_out == 0 {
            0.0
        } else {
            self.loglik / self.held_out as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompletionResult {
    pub method: String,
    pub mask_seed: u64,
    pub mean_init: f64,
    pub mean: f64,
    pub mean_per_pixel: f64,
    pub images: Vec<ImageCompletion>,
    /// `(iteration, mean completion log-likelihood)` over the run.
    pub trace: Vec<(usize, f64)>,
}

impl CompletionResult {
    fn new(cfg: &ExperimentConfig, images: Vec<ImageCompletion>, trace: Vec<(usize, f64)>) -> Self {
        let n = images.len() as f64;
        Self {
            method: format!("{}+{}", cfg.family.name(), serde_json::to_value(cfg.objective).unwrap().as_str().unwrap()),
            mask_seed: cfg.lfa.mask_seed,
            mean_init: images.iter().map(|c| c.loglik_init).sum::<f64>() / n,
            mean: images.iter().map(|c| c.loglik).sum::<f64>() / n,
            mean_per_pixel: images.iter().map(ImageCompletion::per_pixel).sum::<f64>() / n,
            images,
            trace,
        }
    }
}

/// `W` and `b` from a checkpoint; the latent dimension is `|W| / |b|`.
pub fn load_model(path: &Path) -> Result<LogisticFactorAnalysis> {
    if !path.exists() {
        return Err(Error::MissingCheckpoint(path.to_path_buf()));
    }
    let cp = Checkpoint::read(path)?;
    let w = cp.require("W", path)?;
    let b = cp.require("b", path)?;
    if b.is_empty() || w.len() % b.len() != 0 {
        return Err(Error::Format { path: path.to_path_buf(), message: "|W| is not a multiple of |b|".into() });
    }
    Ok(LogisticFactorAnalysis::new(w.len() / b.len(), b.len(), w.to_vec(), b.to_vec())?)
}

fn save_model(cp: &mut Checkpoint, model: &LogisticFactorAnalysis) {
    cp.insert("W", model.weights().to_vec());
    cp.insert("b", model.bias().to_vec());
}

/// Posterior-predictive log-likelihood of the held-out pixels, from
/// `samples` draws of `q`.
pub fn completion_loglik(
    model: &LogisticFactorAnalysis,
    family: &Family,
    lambda: &[f64],
    x: &[f64],
    held_out: &[bool],
    samples: usize,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    let z = sample_family(family.as_dyn(), lambda, samples, rng)?;
    Ok(posterior_predictive_loglik(model, &z, x, held_out)?)
}

fn image_seed(seed: u64, image: usize) -> u64 {
    substream(seed, image as u64, 0).next_u64()
}

fn test_images(cfg: &ExperimentConfig, model: &LogisticFactorAnalysis) -> Result<Vec<Vec<f64>>> {
    let path = cfg.existing(&cfg.data.test, "data.test")?;
    let data = ImageMatrix::read(path)?;
    if data.cols != model.pixels() {
        return Err(Error::Config(format!("test images have {} pixels, the model {}", data.cols, model.pixels())));
    }
    let n = cfg.lfa.max_images.map_or(data.rows, |m| m.min(data.rows));
    if n == 0 {
        return Err(Error::Config("no test images".into()));
    }
    Ok((0..n).map(|i| data.row(i)).collect())
}

struct ImageFit {
    completion: ImageCompletion,
    trace: Vec<f64>,
    minimax: Minimax,
}

fn fit_image(
    cfg: &ExperimentConfig,
    model: &LogisticFactorAnalysis,
    family: &Family,
    x: &[f64],
    image: usize,
    metrics_path: &Path,
) -> Result<ImageFit> {
    let held_out = half_mask(model.pixels(), cfg.lfa.mask_seed, image as u64);
    let observed: Vec<bool> = held_out.iter().map(|h| !h).collect();
    let posterior = LfaPosterior::masked(model, x, &observed)?;
    let f = cfg.test_function.build(model.latent_dim());
    let problem = Problem::new(&posterior, family.as_dyn(), &f, cfg.objective.objective());
    let seed = image_seed(cfg.train.seed, image);
    let train = opvi_core::optimizer::TrainConfig { seed, ..cfg.train.clone() };
    let (lambda, theta) = initial_params(cfg, family, &f, seed);
    let mut mm = Minimax::with_params(&problem, train, lambda, theta)?;

    // The same draws at every evaluation, so the trace moves only with λ.
    let score = |lambda: &[f64]| {
        let mut rng = substream(seed, 0, PURPOSE_SAMPLES);
        completion_loglik(model, family, lambda, x, &held_out, cfg.lfa.predictive_samples, &mut rng)
    };
    let mut trace = vec![score(mm.lambda())?];
    let logged = (model.latent_dim() <= 4).then(|| mm.lambda().len());
    let mut metrics = MetricsWriter::create(metrics_path, logged)?;
    for it in 1..=cfg.train.iterations {
        metrics.write(&mm.step()?)?;
        if it % cfg.lfa.eval_every == 0 || it == cfg.train.iterations {
            trace.push(score(mm.lambda())?);
        }
    }
    metrics.finish()?;
    let completion = ImageCompletion {
        image,
        held_out: held_out.iter().filter(|&&h| h).count(),
        loglik_init: trace[0],
        loglik: *trace.last().unwrap(),
    };
    Ok(ImageFit { completion, trace, minimax: mm })
}

fn trace_iterations(cfg: &ExperimentConfig) -> Vec<usize> {
    let n = cfg.train.iterations;
    let mut its: Vec<usize> = (0..=n).step_by(cfg.lfa.eval_every).collect();
    if *its.last().unwrap() != n {
        its.push(n);
    }
    its
}

fn write_completion(path: &Path, images: &[ImageCompletion]) -> Result<()> {
    write_csv(
        path,
        &["image", "held_out", "loglik_init", "loglik", "loglik_per_pixel"],
        images.iter().map(|c| {
            vec![
                c.image.to_string(),
                c.held_out.to_string(),
                c.loglik_init.to_string(),
                c.loglik.to_string(),
                c.per_pixel().to_string(),
            ]
        }),
    )
}

/// Fits every test image and writes `completion.csv`, `trace.csv`,
/// `summary.json`, per-image metrics and `checkpoint.opvc`.
pub fn run(cfg: &ExperimentConfig) -> Result<CompletionResult> {
    if cfg.experiment != ExperimentKind::Lfa {
        return Err(Error::Config("not an lfa experiment".into()));
    }
    let model_path = cfg.model.as_ref().ok_or_else(|| Error::Config("`model` is not set".into()))?;
    let model = load_model(model_path)?;
    let images = test_images(cfg, &model)?;
    let dir = cfg.prepare_output()?;
    let metrics_dir = dir.join("metrics");
    std::fs::create_dir_all(&metrics_dir).map_err(Error::io(&metrics_dir))?;
    let family = Family::new(cfg.family, model.latent_dim());

    let mut cp = Checkpoint::new();
    save_model(&mut cp, &model);
    cp.insert("family", family.encode());
    let mut completions = Vec::with_capacity(images.len());
    let mut traces = Vec::with_capacity(images.len());
    for (i, x) in images.iter().enumerate() {
        let fit = fit_image(cfg, &model, &family, x, i, &metrics_dir.join(format!("image_{i:03}.csv")))?;
        save_state(&mut cp, &fit.minimax, &format!("/{i}"));
        completions.push(fit.completion);
        traces.push(fit.trace);
    }
    let its = trace_iterations(cfg);
    let n = images.len() as f64;
    let trace: Vec<(usize, f64)> =
        its.iter().enumerate().map(|(k, &it)| (it, traces.iter().map(|t| t[k]).sum::<f64>() / n)).collect();

    cp.write(&dir.join("checkpoint.opvc"))?;
    write_completion(&dir.join("completion.csv"), &completions)?;
    write_csv(
        &dir.join("trace.csv"),
        &["iter", "mean_loglik"],
        trace.iter().map(|(it, v)| vec![it.to_string(), v.to_string()]),
    )?;
    let result = CompletionResult::new(cfg, completions, trace);
    write_json(&dir.join("summary.json"), &result)?;
    Ok(result)
}

/// Scores the `λ`s saved in a fit checkpoint on the configured test images.
pub fn eval(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<CompletionResult> {
    let model = load_model(checkpoint)?;
    let cp = Checkpoint::read(checkpoint)?;
    let family = Family::decode(cp.require("family", checkpoint)?, checkpoint)?;
    let images = test_images(cfg, &model)?;
    let dir = cfg.prepare_output()?;
    let mut completions = Vec::new();
    for (i, x) in images.iter().enumerate() {
        let Some(lambda) = cp.get(&format!("lambda/{i}")) else { break };
        let held_out = half_mask(model.pixels(), cfg.lfa.mask_seed, i as u64);
        let mut rng = substream(image_seed(cfg.train.seed, i), 0, PURPOSE_SAMPLES);
        let v = completion_loglik(&model, &family, lambda, x, &held_out, cfg.lfa.predictive_samples, &mut rng)?;
        completions.push(ImageCompletion {
            image: i,
            held_out: held_out.iter().filter(|&&h| h).count(),
            loglik_init: f64::NAN,
            loglik: v,
        });
    }
    if completions.is_empty() {
        return Err(Error::Format { path: checkpoint.to_path_buf(), message: "no per-image λ sections".into() });
    }
    write_completion(&dir.join("eval_completion.csv"), &completions)?;
    let result = CompletionResult::new(cfg, completions, Vec::new());
    write_json(&dir.join("eval_summary.json"), &result)?;
    Ok(result)
}

#[derive(Clone, Debug, Serialize)]
pub struct PretrainOutcome {
    pub images: usize,
    pub pixels: usize,
    pub latent_dim: usize,
    /// Final joint MAP objective per image.
    pub objective: f64,
    pub model: PathBuf,
}

/// Optionally synthesizes data, then fits `W`, `b` to the training images
/// and writes them to `model`.
pub fn pretrain(cfg: &ExperimentConfig) -> Result<PretrainOutcome> {
    let model_path = cfg.model.clone().ok_or_else(|| Error::Config("`model` is not set".into()))?;
    let dir = cfg.prepare_output()?;
    if let Some(g) = &cfg.lfa.generator {
        let (train_path, test_path) = match (&cfg.data.train, &cfg.data.test) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::Config("a generator needs data.train and data.test paths".into())),
        };
        let p = cfg.lfa.side * cfg.lfa.side;
        let truth = LogisticFactorAnalysis::random(
            cfg.pretrain.latent_dim,
            p,
            g.weight_sd,
            g.bias_sd,
            &mut substream(g.seed, 0, 0),
        );
        let mut rng = substream(g.seed, 1, 0);
        let train: Vec<Vec<f64>> = (0..g.train_images).map(|_| truth.sample_image(&mut rng)).collect();
        let mut rng = substream(g.seed, 2, 0);
        let test: Vec<Vec<f64>> = (0..g.test_images).map(|_| truth.sample_image(&mut rng)).collect();
        for path in [train_path, test_path] {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(Error::io(parent))?;
            }
        }
        ImageMatrix::from_rows(&train).write(train_path)?;
        ImageMatrix::from_rows(&test).write(test_path)?;
        let mut cp = Checkpoint::new();
        save_model(&mut cp, &truth);
        cp.write(&dir.join("generator.opvc"))?;
    }
    let data = ImageMatrix::read(cfg.existing(&cfg.data.train, "data.train")?)?;
    let (model, objective) = pretrain_model(&data.to_rows(), &cfg.pretrain)?;
    let mut cp = Checkpoint::new();
    save_model(&mut cp, &model);
    if let Some(parent) = model_path.parent() {
        std::fs::create_dir_all(parent).map_err(Error::io(parent))?;
    }
    cp.write(&model_path)?;
    let outcome = PretrainOutcome {
        images: data.rows,
        pixels: data.cols,
        latent_dim: model.latent_dim(),
        objective,
        model: model_path,
    };
    write_json(&dir.join("pretrain.json"), &outcome)?;
    Ok(outcome)
}
