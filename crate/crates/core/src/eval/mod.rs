//! Metrics and evaluation protocols.

pub mod metrics;
pub mod protocols;
pub mod report;
pub mod stats;

pub use metrics::{ap, auroc, average_precision, roc_auc, CurvePoint};
pub use protocols::*;
pub use report::{emit_report, read_curves, read_report, EvalReport, Protocol, ReportFiles, Retrieval, SliceKey, SliceMetrics, Summary};
pub use stats::{pearson, pearson_bootstrap, BootstrapCorrelation};

#[cfg(test)]
mod tests;
