//! End-to-end commands: ingest, analyze, correlate, efa, synth and report.
//!
//! Every command writes deterministic files: floats use 12 significant digits,
//! lines end in LF and maps are ordered.

mod analysis;
mod analyze;
mod config;
mod format;
mod inputs;
mod report;
mod series;
mod synth;

use std::path::PathBuf;

use thiserror::Error;

use crate::cluster::ClusterError;
use crate::ingest::IngestError;
use crate::model::ModelError;
use crate::stats::StatsError;
use crate::synthlab::SynthError;
use crate::windows::WindowError;

pub use analysis::{cmd_correlate, cmd_efa, CorrelateSummary, EfaSummary};
pub use analyze::{cmd_analyze, AnalyzeSummary, Manifest, SkippedSnapshot};
pub use config::{
    format_resource_window, parse_duration, parse_resource_window, Layer, RunConfig, Transform,
    PIPELINE_ORDER,
};
pub use format::{csv_line, g12, sha256_hex};
pub use inputs::{cmd_ingest, load_inputs, IngestSummary, Inputs};
pub use report::{cmd_report, ReportSummary};
pub use series::read_series_files;
pub use synth::{cmd_synth, parse_day_list, parse_loadings, SynthArgs, SynthSummary};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Ingest { path: PathBuf, source: IngestError },
    #[error("invalid series file {}: {reason}", path.display())]
    Series { path: PathBuf, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("no snapshot could be computed: {0}")]
    NoSnapshots(String),
    #[error(
        "KMO = {kmo:.3} is not above 0.5, so the series are not suitable for factor analysis; pass --force to run anyway"
    )]
    AdequacyFailed { kmo: f64 },
    #[error(
        "{} comes from a run with overlapping windows, whose snapshots are not independent; pass --force to run anyway",
        path.display()
    )]
    OverlappingWindows { path: PathBuf },
}

impl PipelineError {
    /// 2 for adequacy or convergence failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::AdequacyFailed { .. }
            | PipelineError::Stats(StatsError::NoConvergence { .. }) => 2,
            _ => 1,
        }
    }
}

/// Runs `f` on a pool of `jobs` threads, or on the global pool.
pub(crate) fn with_jobs<R: Send>(
    jobs: Option<usize>,
    f: impl FnOnce() -> R + Send,
) -> Result<R, PipelineError> {
    match jobs {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| PipelineError::Config(format!("jobs: {e}"))),
    }
}
