//! Subcommands of the `myoseg` binary, callable as a library.

pub mod args;
pub mod commands;
pub mod config;

use thiserror::Error;

pub use args::{Cli, Command};
pub use config::{DataPaths, RunConfig};

/// Exit status 2 for usage / configuration problems, 1 for failures at run
/// time.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub(crate) fn usage(e: impl std::fmt::Display) -> Self {
        CliError::Usage(e.to_string())
    }

    pub(crate) fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Worker threads: explicit flag, then `MYOSEG_THREADS`, then all cores.
pub fn resolve_threads(flag: Option<usize>) -> CliResult<usize> {
    if let Some(n) = flag {
        return if n == 0 {
            Err(CliError::Usage("--threads must be >= 1".into()))
        } else {
            Ok(n)
        };
    }
    match std::env::var("MYOSEG_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::Usage(format!("MYOSEG_THREADS={v:?} is not a positive integer"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Run `f` inside a rayon pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(CliError::runtime)?;
    Ok(pool.install(f))
}
