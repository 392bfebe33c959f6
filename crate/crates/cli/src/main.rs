//! `jelly`: generate data, train the stages, evaluate, sweep, benchmark.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jellymon::ganaug::Strategy;

#[derive(Debug, Parser)]
#[command(name = "jelly", version, about = "Sonar event classification pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config with per-stage sections; flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory; the effective config is written into it.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Gen {
        #[command(flatten)]
        common: Common,
        /// Overrides `gen.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the frame classifier on the training split.
    TrainFrame {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Split and initialization seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Extra training events, e.g. the output of `synth`.
        #[arg(long, value_name = "DIR")]
        synth: Option<PathBuf>,
        /// Overrides `frame.epochs`.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train the conditional GAN on the training split.
    TrainGan {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Overrides `gan.epochs`.
        #[arg(long)]
        epochs: Option<usize>,
        /// Overrides `gan.steps_per_epoch`.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Generate enhancement frames for the training split of `--data`.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        gan: PathBuf,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// a, b or c; overrides `enhance.strategy`.
        #[arg(long)]
        strategy: Option<Strategy>,
        /// Overrides `enhance.fraction`.
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the event fusion network on a frozen frame classifier.
    TrainEvent {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        frame_model: PathBuf,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Jellyfish loss weight.
        #[arg(long)]
        wx: Option<f64>,
        /// Seaweed loss weight.
        #[arg(long)]
        wy: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run several seeds end to end and report mean and std.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Dataset directory; generated from `gen` when absent.
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        /// Overrides `gate.tau`.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        wx: Option<f64>,
        #[arg(long)]
        wy: Option<f64>,
        /// Enhance the frame training set with GAN frames.
        #[arg(long)]
        generated: bool,
        /// Average frame confidences instead of the fusion network.
        #[arg(long)]
        average: bool,
    },
    /// Jellyfish TP rate and FP count over a threshold grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Predictions CSV files, or directories holding them; curves are averaged.
        #[arg(long, value_name = "PATH", required = true, num_args = 1..)]
        predictions: Vec<PathBuf>,
        #[arg(long)]
        min: Option<f64>,
        #[arg(long)]
        max: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
    },
    /// Event classification latency with averaging and with fusion.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<usize>>,
        #[arg(long)]
        repetitions: Option<usize>,
        /// Trained frame model; a fresh one times the same.
        #[arg(long, value_name = "DIR")]
        frame_model: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        fusion_model: Option<PathBuf>,
    },
    /// Methods A to E over several seeds as one comparison table.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
    },
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("JELLY_THREADS") else { return Ok(()) };
    let n: usize = v.parse().map_err(|_| anyhow::anyhow!("JELLY_THREADS must be a positive integer, got {v:?}"))?;
    if n == 0 {
        anyhow::bail!("JELLY_THREADS must be a positive integer, got 0");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    use jellymon::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::InvalidArgument(_) => "invalid_argument",
                E::EmptyInput(_) => "empty_input",
                E::ShapeMismatch { .. } => "shape_mismatch",
                E::MissingFile(_) => "missing_file",
                E::VersionMismatch { .. } => "version_mismatch",
                E::OffsetMismatch(_) => "offset_mismatch",
                E::Truncated { .. } => "truncated",
                E::UnknownDtype(_) => "unknown_dtype",
                E::DuplicateName(_) => "duplicate_name",
                E::MissingParam(_) => "missing_param",
                E::Manifest(_) => "manifest",
                E::Io(_) => "io",
            };
        }
        if cause.is::<serde_json::Error>() {
            return "config";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "error"
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|()| commands::run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let line = serde_json::json!({ "error": error_kind(&err), "message": format!("{err:#}") });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
