//! Command-line surface: `bank`, `sample`, `split`, `eval`, `stats`, `viz`.

pub mod commands;
pub mod config;
pub mod overlay;

use std::path::PathBuf;

use anyhow::{Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "roiaug", version, about = "Label-free ROI banks, ROI-crop sampling and patient-level evaluation")]
pub struct Cli {
    /// TOML run configuration; defaults apply to anything it omits.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set sampler.p_roi=0.2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Worker threads for per-image commands (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build ROI banks for every (training) image of a manifest.
    Bank(BankArgs),
    /// Draw augmented samples from banks and write an audit log.
    Sample(SampleArgs),
    /// Assign patients to stratified folds.
    Split(SplitArgs),
    /// Score prediction files at view, breast and patient level.
    Eval(EvalArgs),
    /// Compare two per-fold metric vectors.
    Stats(StatsArgs),
    /// Draw a bank over its source image.
    Viz(VizArgs),
}

#[derive(Debug, Args)]
pub struct FoldSelect {
    /// Fold TSV (`patient_id, fold`); with `--fold`, restricts to training patients.
    #[arg(long, requires = "fold")]
    pub fold_file: Option<PathBuf>,
    /// Held-out fold; its patients are excluded.
    #[arg(long, requires = "fold_file")]
    pub fold: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BankArgs {
    /// Manifest TSV or image directory tree.
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub folds: FoldSelect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImageFormat {
    Png,
    Pgm,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Bank JSON-lines file written by `bank`.
    #[arg(long)]
    pub banks: PathBuf,
    /// Samples per image.
    #[arg(short, long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = ImageFormat::Png)]
    pub format: ImageFormat,
    /// Write the audit log and fixture only.
    #[arg(long)]
    pub audit_only: bool,
    #[command(flatten)]
    pub folds: FoldSelect,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction CSVs; each file is one fold unless `--fold-file` is given.
    #[arg(long, num_args = 1.., required = true)]
    pub predictions: Vec<PathBuf>,
    /// Assigns rows to folds by patient instead of by file.
    #[arg(long)]
    pub fold_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Per-fold values of the proposed method, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub a: Vec<f64>,
    /// Per-fold values of the baseline, same fold order.
    #[arg(long, value_delimiter = ',', required = true)]
    pub b: Vec<f64>,
    #[arg(long, default_value = "ROI")]
    pub a_name: String,
    #[arg(long, default_value = "Full")]
    pub b_name: String,
    #[arg(long, default_value = "ROC-AUC")]
    pub metric: String,
}

#[derive(Debug, Args)]
pub struct VizArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Bank JSON-lines file.
    #[arg(long)]
    pub bank: PathBuf,
    /// Bank entry to draw; required when the file holds several.
    #[arg(long)]
    pub image_id: Option<String>,
    /// Also export the tissue mask (8-bit PGM) and saliency map (16-bit PGM).
    #[arg(long)]
    pub maps: bool,
}

/// Problems found while running; warnings never change the exit status.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl Outcome {
    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        eprintln!("warning: {msg}");
        self.warnings.push(msg);
    }

    pub fn error(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        eprintln!("error: {msg}");
        self.errors.push(msg);
    }

    pub fn exit_code(&self) -> i32 {
        i32::from(!self.errors.is_empty())
    }
}

/// Shared state for one invocation.
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub workers: Option<usize>,
}

pub fn run(cli: Cli) -> Result<Outcome> {
    let mut config = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
        config.sampler.seed = seed;
    }
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let ctx = Context {
        config,
        out: cli.out,
        workers: cli.workers,
    };
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = ctx.workers {
            b = b.num_threads(n.max(1));
        }
        b.build().context("starting worker pool")?
    };
    pool.install(|| match &cli.command {
        Command::Bank(a) => commands::bank::run(&ctx, a),
        Command::Sample(a) => commands::sample::run(&ctx, a),
        Command::Split(a) => commands::split::run(&ctx, a),
        Command::Eval(a) => commands::eval::run(&ctx, a),
        Command::Stats(a) => commands::stats::run(&ctx, a),
        Command::Viz(a) => commands::viz::run(&ctx, a),
    })
}
