//! Experiment orchestration for the `stefan` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod rundir;

use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration rejected:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error(transparent)]
    Core(#[from] stefan_core::Error),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Input(String),
}

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Outcome of a subcommand whose numeric checks ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    NumericFail,
}

impl Status {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Status::Pass
        } else {
            Status::NumericFail
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Status::Pass => 0,
            Status::NumericFail => 1,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub command: &'a str,
    pub config_sha256: String,
    pub config: &'a C,
    pub versions: Versions,
    pub wall_time_seconds: f64,
    pub status: &'a str,
    pub extra: serde_json::Value,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub stefan_cli: &'static str,
    pub stefan_core: &'static str,
}

pub fn versions() -> Versions {
    Versions {
        stefan_cli: env!("CARGO_PKG_VERSION"),
        stefan_core: stefan_core::VERSION,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Writes `manifest.json`-style metadata for a finished command. The hash
/// covers the resolved configuration with all defaults filled in.
pub fn write_manifest<C: Serialize>(
    path: &Path,
    command: &str,
    config: &C,
    started: Instant,
    status: Status,
    extra: serde_json::Value,
) -> Result<(), CliError> {
    let canonical = serde_json::to_vec(config).map_err(|e| CliError::Input(e.to_string()))?;
    let m = Manifest {
        command,
        config_sha256: sha256_hex(&canonical),
        config,
        versions: versions(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        status: match status {
            Status::Pass => "pass",
            Status::NumericFail => "fail",
        },
        extra,
    };
    let text = serde_json::to_string_pretty(&m).map_err(|e| CliError::Input(e.to_string()))?;
    std::fs::write(path, text).map_err(io_err(path))
}
