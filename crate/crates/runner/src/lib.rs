//! Experiment orchestration: config parsing, the cell matrix, efficiency
//! measurement and report rendering.

use std::io;
use std::path::Path;

use thiserror::Error;

pub mod config;
pub mod efficiency;
pub mod engine;
pub mod pipeline;
pub mod report;
pub mod results;

pub use config::{parse_config, ExperimentConfig, MetricName, SettingEntry, SCHEMA_VERSION};
pub use efficiency::{measure_efficiency, EfficiencyStats};
pub use engine::{load_source, run_experiment, RunOptions};
pub use pipeline::{Detector, Inference};
pub use report::{emit_report, write_reports, ReportFormat};
pub use results::{CellResult, CellStatus, MetricValue, RunResults};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("detector error: {0}")]
    Detector(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("too few samples: need {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("no results to report")]
    EmptyResults,
    #[error("invalid results file: {0}")]
    InvalidResults(String),
    #[error("config hash mismatch: recorded {recorded}, computed {computed}")]
    HashMismatch { recorded: String, computed: String },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl RunnerError {
    pub fn io(path: &Path, e: io::Error) -> Self {
        RunnerError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    /// Process exit code: 2 for config problems, 3 for data and I/O, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunnerError::Config { .. } => 2,
            RunnerError::Data(_)
            | RunnerError::Io { .. }
            | RunnerError::InvalidResults(_)
            | RunnerError::HashMismatch { .. }
            | RunnerError::EmptyResults => 3,
            _ => 1,
        }
    }
}
