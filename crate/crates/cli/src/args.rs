use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "myoseg", version, about = "Myocardium segmentation: data, training, evaluation, inference")]
pub struct Cli {
    /// Worker threads (falls back to MYOSEG_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Jaccard,
    Dice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SizeArg {
    Tiny,
    Small,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic phantom dataset and its manifest.
    GenData {
        #[arg(long)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 13)]
        slices: usize,
        /// Also write one image volume per case.
        #[arg(long)]
        volumes: bool,
    },
    /// Train from a JSON run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        no_bn: bool,
        #[arg(long)]
        no_residual: bool,
        #[arg(long, value_enum)]
        loss: Option<LossArg>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a manifest (Dice, MSE, MAE).
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Directory for metrics.txt and metrics.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Segment an image volume slice by slice.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        volume: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reference mask volume for the overlays.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Finite-difference check of every backward pass.
    Gradcheck {
        #[arg(long, value_enum, default_value_t = SizeArg::Tiny)]
        size: SizeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Perturb the analytic gradient of the named check (harness test).
        #[arg(long, hide = true)]
        corrupt: Option<String>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Time inference of a full 128x128x13 volume.
    Bench {
        /// Checkpoint to time; a freshly initialised default network otherwise.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 13)]
        slices: usize,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}
