mod bench;
mod eval;
mod gen_data;
mod gradcheck;
mod infer;
mod train;

pub use bench::{bench, BenchReport, TimingSummary, BUDGET_SECONDS};
pub use eval::eval;
pub use gen_data::gen_data;
pub use gradcheck::gradcheck;
pub use infer::{infer, InferSummary};
pub use train::{train, train_run, TrainOptions, TrainSummary};

use std::path::Path;

use myoseg::model::{load_checkpoint, Checkpoint, CheckpointError};

use crate::args::{Cli, Command, LossArg, SizeArg};
use crate::{resolve_threads, with_threads, CliError, CliResult};

/// Missing files are usage errors; unreadable contents are runtime errors.
pub(crate) fn open_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("checkpoint {} does not exist", path.display())));
    }
    load_checkpoint(path).map_err(|e: CheckpointError| {
        CliError::Runtime(format!("cannot load {} ({}): {e}", path.display(), e.code()))
    })
}

pub fn run(cli: Cli) -> CliResult<()> {
    let threads = resolve_threads(cli.threads)?;
    match cli.command {
        Command::GenData {
            cases,
            seed,
            out,
            size,
            slices,
            volumes,
        } => gen_data(cases, seed, &out, size, slices, volumes).map(|_| ()),
        Command::Train {
            config,
            no_bn,
            no_residual,
            loss,
            resume,
            out,
        } => {
            let opts = TrainOptions {
                config,
                no_bn,
                no_residual,
                loss: loss.map(|l| match l {
                    LossArg::Jaccard => myoseg::model::LossKind::Jaccard,
                    LossArg::Dice => myoseg::model::LossKind::Dice,
                }),
                resume,
                out,
            };
            with_threads(threads, || train(&opts))?.map(|_| ())
        }
        Command::Eval {
            checkpoint,
            manifest,
            out,
        } => with_threads(threads, || eval(&checkpoint, &manifest, out.as_deref()))?.map(|_| ()),
        Command::Infer {
            checkpoint,
            volume,
            out,
            truth,
        } => with_threads(threads, || infer(&checkpoint, &volume, &out, truth.as_deref()))?.map(|s| {
            println!("{} slices in {:.3} s", s.slices, s.wall_seconds);
        }),
        Command::Gradcheck {
            size,
            seed,
            corrupt,
            json,
        } => {
            let size = match size {
                SizeArg::Tiny => myoseg::gradcheck::GradcheckSize::Tiny,
                SizeArg::Small => myoseg::gradcheck::GradcheckSize::Small,
            };
            gradcheck(size, seed, corrupt, json.as_deref()).map(|_| ())
        }
        Command::Bench {
            checkpoint,
            repeats,
            slices,
            json,
        } => bench(checkpoint.as_deref(), repeats, slices, threads, json.as_deref()).map(|_| ()),
    }
}
