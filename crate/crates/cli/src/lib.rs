//! Command-line front end: ingest a DLV panel, train a simulator, sample
//! paths from a checkpoint, score them and tabulate runs.

pub mod commands;
pub mod config;
mod error;

pub use commands::{
    cmd_evaluate, cmd_fixture, cmd_generate, cmd_ingest, cmd_report, cmd_train, fixture_panel, run_label, score_model, train_run,
    FixtureKind, GenerateRequest, IngestSummary, TrainSummary,
};
pub use config::RunConfig;
pub use error::CliError;

/// Root for relative output directories in run configs.
pub const OUTPUT_ROOT_VAR: &str = "DLVSIM_OUTPUT_ROOT";
/// Worker threads for path sampling.
pub const THREADS_VAR: &str = "DLVSIM_THREADS";

/// Sizes the global thread pool from `DLVSIM_THREADS` when set.
pub fn init_threads() -> Result<(), CliError> {
    let Some(v) = std::env::var_os(THREADS_VAR) else { return Ok(()) };
    let n: usize = v
        .to_str()
        .and_then(|s| s.parse().ok())
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Input(format!("{THREADS_VAR} must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Input(e.to_string()))
}
