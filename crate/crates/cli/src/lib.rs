//! Batch driver for the `rpimon` simulator.
//!
//! `rpimon <config-file> [--set k=v]... [--threads N] [--out DIR]` parses the
//! configuration ([`config`]), runs one mode ([`run`]) and writes its
//! artifacts ([`output`]).

pub mod config;
pub mod output;
pub mod run;

use std::path::{Path, PathBuf};

pub use config::{parse_config, parse_config_with_overrides, RunConfig};
pub use run::{CliError, RunOutput};

/// Runs `cfg` and writes its artifacts into `out_dir` (or the configured
/// output directory). A failed `check` suite still writes its report and is
/// returned as a numerical failure.
pub fn execute(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<(RunOutput, Vec<PathBuf>), CliError> {
    let result = run::run(cfg)?;
    let dir = out_dir.unwrap_or(&cfg.output_dir);
    let paths = output::write_artifacts(dir, &result.artifacts).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    Ok((result, paths))
}
