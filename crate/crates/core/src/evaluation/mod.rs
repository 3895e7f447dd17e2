//! Error metrics, the per-epoch estimation pipeline and experiment sweeps.

mod metrics;
mod mode;
mod output;
mod pipeline;
mod sweep;

use thiserror::Error;

use crate::factor_graph::StateKey;

pub use metrics::{compute_errors, median, nearest_rank, summarize, ErrorRecord, Summary};
pub use mode::MethodMode;
pub use output::{write_epoch_csv, write_summary_json, write_sweep_csv, RunSummary};
pub use pipeline::{run_scenario, EpochRecord, PlaneStats, RunReport, SolverStats};
pub use sweep::{interruption_sweep, AggregateRow, SweepReport, SweepRow};

#[derive(Debug, Error)]
pub enum EvaluationError {
    /// Estimate and truth key sets differ; carries a key present in only one.
    #[error("estimate and truth keys differ (first mismatch: {0:?})")]
    KeyMismatch(Option<StateKey>),
    #[error("no error records to summarize")]
    Empty,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serialize(String),
}
