//! Config-driven experiment runner behind the `qsdlab` binary.
//!
//! A run reads one TOML document (or the `config` echo inside a previous
//! run's `manifest.json`), dispatches to a command, and writes CSV tables,
//! `summary.json` and `manifest.json` into the output directory. Nothing is
//! written unless the whole computation succeeded.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod commands;
pub mod config;

use std::path::Path;
use std::time::Instant;

use anyhow::Context;

pub use artifacts::{Artifacts, Check, FileEntry, RunManifest};
pub use config::{Command, ConfigError, ExperimentConfig};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_EXTINCTION: i32 = 4;
pub const EXIT_IO: i32 = 5;

/// Runs the experiment described by `config_path` and writes its artifacts
/// into `out`.
pub fn run(config_path: &Path, out: &Path) -> anyhow::Result<RunManifest> {
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let cfg = ExperimentConfig::parse(&text, config_path)?;
    run_config(&cfg, out)
}

pub fn run_config(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<RunManifest> {
    let start = Instant::now();
    let outcome = commands::dispatch(cfg)?;
    let mut files = outcome.artifacts;
    files.json("summary.json", &outcome.summary)?;
    let manifest = RunManifest::new(cfg, &files, outcome.checks, start.elapsed().as_secs_f64())?;
    files.json("manifest.json", &manifest)?;
    files.write_all(out)?;
    Ok(manifest)
}

/// Maps an error chain to the documented exit status.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<qsdlab::Error>() {
            return match e {
                qsdlab::Error::Numerical { .. } | qsdlab::Error::Growth { .. } => EXIT_NUMERICAL,
                qsdlab::Error::Extinction { .. } => EXIT_EXTINCTION,
                _ => EXIT_CONFIG,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
    }
    1
}
