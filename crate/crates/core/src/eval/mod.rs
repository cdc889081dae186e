//! Downstream evaluation: linear probe, cosine kNN, and the policy
//! comparison grid that ties pretraining and both evaluators together.

mod compare;
mod knn;
mod probe;

pub use compare::{
    compare_policies, label_of, sample_std, CellMetrics, CellOutcome, CellResult, ComparePlan,
    CompareReport, PolicySummary, RANDOM_ENCODER_ROW, VANILLA_ROW,
};
pub use knn::knn_eval;
pub use probe::{linear_probe, ProbeOptions, ProbeReport};
