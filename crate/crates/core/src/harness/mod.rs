//! Evaluation protocols, metrics, run manifests and reports.

mod experiments;
mod manifest;
mod metrics;
mod protocol;
mod report;
mod split;

pub use experiments::{CloudTrainer, RolloutBenchmark, RolloutOutcome};
pub use manifest::RunManifest;
pub use metrics::{
    metrics_classification, metrics_segmentation, metrics_segmentation_macro, ClassificationMetrics, Confusion,
    SegmentationMetrics,
};
pub use protocol::{
    fan_out, require_runs, run_kfold, run_repeated, MetricReport, RunMetrics, Summary, Trainer, METRIC_COLUMNS,
};
pub use report::{
    reference_classification, reference_segmentation, reference_simulation, report_render, ReferenceRow,
    RenderedReport, DISPLAY_HEADERS, REFERENCE_MARK,
};
pub use split::{stratified_folds, stratified_split};
