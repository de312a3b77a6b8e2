use std::path::Path;

use myoseg::dataio::CaseRecord;
use myoseg::phantom::{generate_dataset, PhantomConfig, PhantomError};

use crate::{CliError, CliResult};

pub fn gen_data(
    cases: usize,
    seed: u64,
    out: &Path,
    size: usize,
    slices: usize,
    volumes: bool,
) -> CliResult<Vec<CaseRecord>> {
    let config = PhantomConfig {
        image_size: size,
        slices_per_case: slices,
        ..Default::default()
    };
    if cases == 0 {
        return Err(CliError::Usage("--cases must be >= 1".into()));
    }
    config.validate().map_err(CliError::usage)?;
    let records = generate_dataset(cases, seed, out, &config, volumes).map_err(|e| match e {
        PhantomError::Config(_) => CliError::usage(e),
        PhantomError::Data(_) => CliError::runtime(e),
    })?;
    println!(
        "wrote {} cases x {} slices ({}x{}) to {}",
        records.len(),
        slices,
        size,
        size,
        out.display()
    );
    Ok(records)
}
