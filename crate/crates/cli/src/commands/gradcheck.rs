use std::fs;
use std::path::Path;
use std::time::Instant;

use myoseg::gradcheck::{run_gradchecks, CheckReport, GradcheckOptions, GradcheckSize};

use crate::{CliError, CliResult};

/// Prints one row per check; any failure is a runtime error.
pub fn gradcheck(
    size: GradcheckSize,
    seed: u64,
    corrupt: Option<String>,
    json: Option<&Path>,
) -> CliResult<Vec<CheckReport>> {
    let start = Instant::now();
    let reports = run_gradchecks(&GradcheckOptions { size, seed, corrupt });
    println!("{:<16} {:>14} {:>10}  {:<6} worst input", "check", "max rel err", "tolerance", "result");
    for r in &reports {
        println!(
            "{:<16} {:>14.3e} {:>10.0e}  {:<6} {}",
            r.name,
            r.max_rel_error,
            r.tolerance,
            if r.passed { "pass" } else { "FAIL" },
            r.worst_input
        );
    }
    println!("finished in {:.2} s", start.elapsed().as_secs_f64());
    if let Some(p) = json {
        let text = serde_json::to_string_pretty(&reports).map_err(CliError::runtime)?;
        fs::write(p, text + "\n").map_err(CliError::runtime)?;
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} gradient check(s) failed")));
    }
    Ok(reports)
}
