//! AUROC, per-task reports and suite aggregation.

mod auroc;
pub mod fixtures;
mod report;

use thiserror::Error;

pub use auroc::compute_auroc;
pub use report::{
    aggregate, emit_report, stages_from_count, success_rate, ReportFormat, SuiteSummary, TaskReport, CSV_HEADER,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("length mismatch: {scores} scores, {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("fixture: {0}")]
    Fixture(String),
}
