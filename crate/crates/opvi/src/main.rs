use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use opvi::config::{ExperimentConfig, ExperimentKind, HistogramConfig};
use opvi::experiments::mixture::{bin_edges, histogram};
use opvi::experiments::{lfa, mixture, Family};
use opvi::format::Checkpoint;
use opvi::{Error, Result};
use opvi_core::operators::sample_family;
use opvi_core::rng::substream;

/// Operator variational inference experiments.
#[derive(Parser)]
#[command(name = "opvi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `train.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-evaluate a fit checkpoint.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Pretrain logistic factor analysis weights (synthesizing data if configured).
    PretrainLfa {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `pretrain.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Histogram of draws from a checkpoint's variational distribution.
    Hist {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 80)]
        bins: usize,
        #[arg(long, default_value_t = -8.0, allow_hyphen_values = true)]
        lo: f64,
        #[arg(long, default_value_t = 8.0, allow_hyphen_values = true)]
        hi: f64,
        /// Test image index for per-image checkpoints.
        #[arg(long)]
        image: Option<usize>,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    Ok(cfg)
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit { config, seed } => {
            let cfg = load(&config, seed)?;
            match cfg.experiment {
                ExperimentKind::Mixture => print_json(&mixture::run(&cfg)?),
                ExperimentKind::Lfa => {
                    let r = lfa::run(&cfg)?;
                    println!("{}: mean completion log-likelihood {:.4} (initial {:.4})", r.method, r.mean, r.mean_init);
                }
            }
        }
        Command::Eval { config, checkpoint, seed } => {
            let cfg = load(&config, seed)?;
            match cfg.experiment {
                ExperimentKind::Mixture => print_json(&mixture::eval(&cfg, &checkpoint)?),
                ExperimentKind::Lfa => {
                    let r = lfa::eval(&cfg, &checkpoint)?;
                    println!(
                        "{}: mean completion log-likelihood {:.4} over {} images",
                        r.method,
                        r.mean,
                        r.images.len()
                    );
                }
            }
        }
        Command::PretrainLfa { config, seed } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.pretrain.seed = s;
            }
            print_json(&lfa::pretrain(&cfg)?);
        }
        Command::Hist { checkpoint, samples, out, seed, bins, lo, hi, image } => {
            let h = HistogramConfig { bins, lo, hi, samples };
            if samples == 0 || bins == 0 || !(lo < hi) {
                return Err(Error::Config("need samples > 0, bins > 0 and lo < hi".into()));
            }
            let cp = Checkpoint::read(&checkpoint)?;
            let family = Family::decode(cp.require("family", &checkpoint)?, &checkpoint)?;
            let name = image.map_or("lambda".to_string(), |i| format!("lambda/{i}"));
            let lambda = cp.require(&name, &checkpoint)?;
            let draws = sample_family(family.as_dyn(), lambda, samples, &mut substream(seed, 0, 2))?;
            write_hist(&out, &draws, &h)?;
        }
    }
    Ok(())
}

/// One count column per latent coordinate.
fn write_hist(path: &Path, draws: &[Vec<f64>], h: &HistogramConfig) -> Result<()> {
    let dim = draws[0].len();
    let counts: Vec<Vec<u64>> =
        (0..dim).map(|d| histogram(&draws.iter().map(|z| z[d]).collect::<Vec<_>>(), h)).collect();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["bin_lo".to_string(), "bin_hi".to_string()];
    if dim == 1 {
        header.push("count".into());
    } else {
        header.extend((0..dim).map(|d| format!("count_{d}")));
    }
    w.write_record(&header)?;
    for (b, e) in bin_edges(h).windows(2).enumerate() {
        let mut row = vec![e[0].to_string(), e[1].to_string()];
        row.extend(counts.iter().map(|c| c[b].to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("opvi: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
