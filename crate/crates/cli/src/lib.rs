//! Command-line front end and scoring service for `oosguard`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod serve;

pub use error::{CliError, CliResult};

/// Caps rayon's global pool from `OOSGUARD_THREADS`, if set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("OOSGUARD_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("OOSGUARD_THREADS must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::usage(e.to_string()))
}
