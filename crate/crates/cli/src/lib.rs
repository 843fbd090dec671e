//! Config-driven orchestration of the carry-gap pipeline. Every stage reads
//! and writes on-disk artifacts, so a full run and a sequence of single-stage
//! invocations produce the same files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod manifest;
pub mod stages;

use std::path::PathBuf;

use carrygap_core::carrygap::CarryGapError;
use carrygap_core::curves::CurveError;
use carrygap_core::econometrics::EconError;
use carrygap_core::ingest::IngestError;
use carrygap_core::pathrisk::PathRiskError;
use carrygap_core::synthgen::SynthError;

pub use config::{Need, RunConfig};
pub use manifest::{FileEntry, Manifest, MANIFEST_FILE, PARTIAL_MARKER};
pub use stages::{run_pipeline, RunOutcome, Stage};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: schema mismatch (missing columns: [{}]; unexpected columns: [{}])", missing.join(", "), unexpected.join(", "))]
    Schema {
        path: PathBuf,
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    CarryGap(#[from] CarryGapError),
    #[error(transparent)]
    Econ(#[from] EconError),
    #[error(transparent)]
    PathRisk(#[from] PathRiskError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("json encoding failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("Monte Carlo check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    /// Process exit code: 2 for configuration problems caught before any
    /// compute, 1 for stage failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Runs `f` on a dedicated pool of `workers` threads, or the global pool.
pub fn with_workers<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, CliError> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
