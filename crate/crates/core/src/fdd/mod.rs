//! Residual generation, metrics and the end-to-end diagnosis benchmark.

pub mod benchmark;
pub mod metrics;
pub mod report;
pub mod residuals;

pub use benchmark::{run_benchmark, Recording};
pub use metrics::{confusion_matrix, labels_from_indices, mean_r2, r2_score, ConfusionMatrix};
pub use report::{BenchmarkRun, ClassifierResult, DiagnosisReport, RegressorResult};
pub use residuals::{compute_residuals, ResidualSeries};
