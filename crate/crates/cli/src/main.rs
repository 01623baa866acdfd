//! `harforge`: train, evaluate and inspect wearable activity recognition
//! models from the command line.
//!
//! Exit status: 0 on success, 1 for usage, configuration or input errors,
//! 2 for failures during computation or while writing results.

mod commands;
mod error;
mod run_config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use harforge_core::data::Split;

use commands::{Common, ScoreArgs, Selector, SyntheticArgs};
use error::{CliError, CliResult};
use run_config::parse_toggle;

#[derive(Debug, Parser)]
#[command(name = "harforge", version, about = "Wearable activity recognition with channel and temporal attention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON run configuration (`manifest`, `out`, `train`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset manifest; overrides the configuration.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Component switch, e.g. `cie=off`. Repeatable.
    #[arg(long = "toggle", value_parser = parse_toggle)]
    toggles: Vec<(String, bool)>,
}

impl CommonArgs {
    fn common(&self, seed: Option<u64>) -> Common {
        Common {
            config: self.config.clone(),
            manifest: self.manifest.clone(),
            out: self.out.clone(),
            seed,
            toggles: self.toggles.clone(),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write checkpoints, history and a validation report.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Training seed; overrides the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Epoch budget; overrides the configuration.
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue training from this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score a checkpoint sample by sample on one split.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Trained model.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Manifest split to read (`train`, `val` or `test`).
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Write per-sample predictions for the recordings of one split.
    Predict {
        #[command(flatten)]
        common: CommonArgs,
        /// Trained model.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Manifest split to read (`train`, `val` or `test`).
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Score a prediction stream against a truth stream without a model.
    Score {
        /// CSV with a `truth` or `label` column (else the last column).
        #[arg(long)]
        truth: PathBuf,
        /// CSV with a `pred` or `prediction` column (else the last column).
        #[arg(long)]
        pred: PathBuf,
        /// Comma-separated label names in class order.
        #[arg(long, conflicts_with = "manifest")]
        labels: Option<String>,
        /// Take label names from a dataset manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Name of the Null class.
        #[arg(long)]
        null: Option<String>,
        /// Directory for the JSON report and confusion matrix.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Leave the Null class out of the headline mean F1.
        #[arg(long)]
        exclude_null_from_fm: bool,
    },
    /// Export channel attention matrices and temporal weights of selected windows.
    ExportAttention {
        #[command(flatten)]
        common: CommonArgs,
        /// Trained model.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Manifest split to read (`train`, `val` or `test`).
        #[arg(long, default_value = "test")]
        split: Split,
        /// Only windows of these recordings (index within the split). Repeatable.
        #[arg(long = "sequence")]
        sequences: Vec<usize>,
        /// Smallest window start sample.
        #[arg(long)]
        from: Option<usize>,
        /// Largest window start sample.
        #[arg(long)]
        to: Option<usize>,
        /// At most this many windows.
        #[arg(long, default_value_t = 32)]
        max: usize,
    },
    /// Write a separable synthetic dataset and its manifest.
    GenerateSynthetic {
        /// Directory for the recordings and `manifest.json`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Training recordings.
        #[arg(long, default_value_t = 3)]
        train: usize,
        /// Validation recordings.
        #[arg(long, default_value_t = 1)]
        val: usize,
        /// Test recordings.
        #[arg(long, default_value_t = 1)]
        test: usize,
        /// Samples per activity block.
        #[arg(long, default_value_t = 400)]
        block_len: usize,
        /// Classes, the first of which is Null.
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 6)]
        channels: usize,
        /// Standard deviation of the additive Gaussian noise.
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
    },
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("HARFORGE_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::input(format!("HARFORGE_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(CliError::runtime)
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Train {
            common,
            seed,
            epochs,
            checkpoint,
        } => commands::train(&common.common(seed), checkpoint.as_deref(), epochs),
        Command::Eval {
            common,
            checkpoint,
            split,
        } => commands::eval(&common.common(None), &checkpoint, split),
        Command::Predict {
            common,
            checkpoint,
            split,
        } => commands::predict(&common.common(None), &checkpoint, split),
        Command::Score {
            truth,
            pred,
            labels,
            manifest,
            null,
            out,
            exclude_null_from_fm,
        } => commands::score(&ScoreArgs {
            truth,
            pred,
            labels,
            manifest,
            null,
            out,
            exclude_null_from_fm,
        }),
        Command::ExportAttention {
            common,
            checkpoint,
            split,
            sequences,
            from,
            to,
            max,
        } => commands::export(
            &common.common(None),
            &checkpoint,
            &Selector {
                split,
                sequences,
                from,
                to,
                max,
            },
        ),
        Command::GenerateSynthetic {
            out,
            seed,
            train,
            val,
            test,
            block_len,
            classes,
            channels,
            noise,
        } => commands::generate_synthetic(&SyntheticArgs {
            out,
            seed,
            train,
            val,
            test,
            block_len,
            classes,
            channels,
            noise,
        }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
