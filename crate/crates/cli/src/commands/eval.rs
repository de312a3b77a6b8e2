use std::fs;
use std::path::Path;

use myoseg::dataio::load_samples;
use myoseg::optim::{evaluate, EvalReport, TrainError};

use super::open_checkpoint;
use crate::{CliError, CliResult};

/// Prints the metrics table; with `out`, also writes `metrics.txt` and
/// `metrics.json`.
pub fn eval(checkpoint: &Path, manifest: &Path, out: Option<&Path>) -> CliResult<EvalReport> {
    if !manifest.is_file() {
        return Err(CliError::Usage(format!("manifest {} does not exist", manifest.display())));
    }
    let ck = open_checkpoint(checkpoint)?;
    let samples = load_samples(manifest).map_err(|e| CliError::Runtime(format!("{}: {e}", manifest.display())))?;
    let report = evaluate(&ck.network, &samples).map_err(|e| match e {
        TrainError::Data(_) => CliError::usage(e),
        _ => CliError::runtime(e),
    })?;
    let table = report.to_table();
    print!("{table}");
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(CliError::runtime)?;
        fs::write(dir.join("metrics.txt"), &table).map_err(CliError::runtime)?;
        let json = serde_json::to_string_pretty(&report).map_err(CliError::runtime)?;
        fs::write(dir.join("metrics.json"), json + "\n").map_err(CliError::runtime)?;
    }
    Ok(report)
}
