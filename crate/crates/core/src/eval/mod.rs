//! Stratified cross-validation, confusion matrices, fold metrics and their
//! aggregation, subgroup evaluation and report files.

mod confusion;
mod cv;
mod metrics;
mod report;
mod subgroup;

pub use confusion::{one_vs_rest_counts, ConfusionMatrix, OneVsRest};
pub use cv::{stratified_kfold, Folds};
pub use metrics::{
    aggregate, fold_metrics, fold_metrics_with, Averaging, FoldMetrics, FoldReport, Metric,
    RunReport, Summary,
};
pub use report::{
    markdown_table, read_fold_csv, read_per_class_f1_csv, read_predictions_csv, write_fold_csv,
    write_per_class_f1_csv, write_predictions_csv, FoldCsvRow, PerClassF1Row, PredictionRecord,
};
pub use subgroup::{subgroup_eval, Attribute, GroupResult, SubgroupReport};
