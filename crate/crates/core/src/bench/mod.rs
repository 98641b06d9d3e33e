//! Experiment harness: multi-seed sweeps, order statistics, the batch-size
//! efficiency score, and plot-ready report tables.

pub mod efficiency;
pub mod report;
pub mod stats;
pub mod sweep;

use thiserror::Error;

pub use efficiency::{efficiency_scores, EfficiencyInput, EfficiencyRow, EfficiencyTable};
pub use report::{report, ReportOutcome};
pub use sweep::{run_sweep, SweepAxis, SweepOutcome, SweepSpec};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no results to work with")]
    Empty,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
}
