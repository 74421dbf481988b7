//! JSON experiment configuration.
//!
//! Relative paths are resolved against the directory holding the config file.
//! Unknown fields are rejected so that typos surface as config errors.

use std::fs;
use std::path::{Path, PathBuf};

use opvi_core::models::lfa::PretrainConfig;
use opvi_core::operators::OperatorObjective;
use opvi_core::optimizer::TrainConfig;
use opvi_core::testfn::{BoundedMlp, ClipMode};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Mixture,
    Lfa,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// Langevin-Stein operator with the square distance.
    Ls,
    /// KL operator with the identity distance.
    Kl,
}

impl ObjectiveKind {
    pub fn objective(self) -> OperatorObjective {
        match self {
            ObjectiveKind::Ls => OperatorObjective::langevin_stein(),
            ObjectiveKind::Kl => OperatorObjective::kl(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Gaussian,
    SignSplit,
    Program,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Gaussian => "gaussian",
            FamilyKind::SignSplit => "sign_split",
            FamilyKind::Program => "program",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestFunctionConfig {
    /// Hidden width; `null` means twice the latent dimension.
    pub hidden: Option<usize>,
    pub depth: usize,
    pub bound: f64,
    pub clip: ClipMode,
}

impl Default for TestFunctionConfig {
    fn default() -> Self {
        let d = BoundedMlp::new(1);
        Self { hidden: None, depth: d.depth, bound: d.bound, clip: d.clip }
    }
}

impl TestFunctionConfig {
    pub fn build(&self, dim: usize) -> BoundedMlp {
        let base = BoundedMlp::new(dim);
        BoundedMlp {
            hidden: self.hidden.unwrap_or(base.hidden),
            depth: self.depth,
            bound: self.bound,
            clip: self.clip,
            dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramConfig {
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
    /// Draws from the fitted `q`.
    pub samples: usize,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self { bins: 80, lo: -8.0, hi: 8.0, samples: 100_000 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    /// Training images for `pretrain-lfa`.
    pub train: Option<PathBuf>,
    /// Test images for the completion benchmark.
    pub test: Option<PathBuf>,
}

/// Synthetic data from a random logistic factor analysis generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub weight_sd: f64,
    pub bias_sd: f64,
    pub train_images: usize,
    pub test_images: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self { seed: 7, weight_sd: 1.5, bias_sd: 1.0, train_images: 500, test_images: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LfaConfig {
    /// Image side; images have `side²` pixels.
    pub side: usize,
    /// If set, `pretrain-lfa` writes synthetic train and test sets to the data paths.
    pub generator: Option<GeneratorConfig>,
    pub mask_seed: u64,
    /// Posterior samples in the predictive estimate.
    pub predictive_samples: usize,
    /// Completion is evaluated every this many iterations (and at the end).
    pub eval_every: usize,
    /// Use only the first this many test images.
    pub max_images: Option<usize>,
}

impl Default for LfaConfig {
    fn default() -> Self {
        Self { side: 8, generator: None, mask_seed: 0, predictive_samples: 100, eval_every: 50, max_images: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub objective: ObjectiveKind,
    pub family: FamilyKind,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub test_function: TestFunctionConfig,
    /// Standard deviation of a seeded perturbation of the Gaussian family's
    /// initial mean; 0 keeps the family's own initialization.
    #[serde(default)]
    pub init_mean_sd: f64,
    #[serde(default)]
    pub data: DataPaths,
    /// LFA model checkpoint (`W`, `b`): written by `pretrain-lfa`, read by `fit`.
    #[serde(default)]
    pub model: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub histogram: HistogramConfig,
    #[serde(default)]
    pub lfa: LfaConfig,
    #[serde(default)]
    pub pretrain: PretrainConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, validates and resolves relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve(base);
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for p in [&mut self.data.train, &mut self.data.test, &mut self.model].into_iter().flatten() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.objective == ObjectiveKind::Kl && self.family != FamilyKind::Gaussian {
            return Err(Error::IncompatiblePair(self.family.name().into()));
        }
        match self.experiment {
            ExperimentKind::Mixture => {
                if self.family == FamilyKind::Program {
                    return Err(Error::Config("the mixture experiment uses `gaussian` or `sign_split`".into()));
                }
                let h = &self.histogram;
                if h.bins == 0 || !(h.lo < h.hi) || h.samples == 0 {
                    return Err(Error::Config("histogram needs bins > 0, lo < hi and samples > 0".into()));
                }
            }
            ExperimentKind::Lfa => {
                if self.family == FamilyKind::SignSplit {
                    return Err(Error::Config("the sign-split program is one-dimensional".into()));
                }
                if self.lfa.predictive_samples == 0 || self.lfa.eval_every == 0 {
                    return Err(Error::Config("lfa.predictive_samples and lfa.eval_every must be positive".into()));
                }
            }
        }
        if !(self.init_mean_sd >= 0.0) {
            return Err(Error::Config("init_mean_sd must be non-negative".into()));
        }
        let t = &self.test_function;
        if t.depth == 0 || t.hidden == Some(0) || !(t.bound > 0.0) {
            return Err(Error::Config("test_function needs depth > 0, hidden > 0 and bound > 0".into()));
        }
        Ok(())
    }

    /// `path`, which must exist.
    pub fn existing<'a>(&self, path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
        match path {
            Some(p) if p.exists() => Ok(p),
            Some(p) => Err(Error::Config(format!("{what} `{}` does not exist", p.display()))),
            None => Err(Error::Config(format!("{what} is not set"))),
        }
    }

    /// Creates the output directory and checks that it is writable.
    pub fn prepare_output(&self) -> Result<&Path> {
        let dir = &self.output_dir;
        fs::create_dir_all(dir).map_err(|e| Error::Config(format!("output_dir `{}`: {e}", dir.display())))?;
        let probe = dir.join(".opvi-write-test");
        fs::write(&probe, b"")
            .and_then(|_| fs::remove_file(&probe))
            .map_err(|e| Error::Config(format!("output_dir `{}` is not writable: {e}", dir.display())))?;
        Ok(dir)
    }
}
