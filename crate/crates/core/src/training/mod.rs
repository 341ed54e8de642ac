//! Optimization loop, dataset preparation, metrics and experiment drivers.

mod adam;
mod config;
mod dataset;
mod experiment;
mod gradcheck;
mod metrics;
mod train;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use config::TrainConfig;
pub use dataset::{DatasetItem, EmbedOptions, EmbeddedDataset, EmbeddedMesh, PreparedDataset};
pub use experiment::{
    code_version, dataset_spec, run_experiment, ConditionSummary, ExperimentConfig, ExperimentKind, ExperimentReport, RunRecord, Summary,
    EXPERIMENT_FORMAT_VERSION,
};
pub use gradcheck::{
    network_grad_check, random_field_mesh, NetworkGradCheck, OutputHook, NETWORK_CHECK_STEP, NETWORK_CHECK_TOLERANCE,
};
pub use metrics::{accuracy, ami, argmax, entropy, expected_mutual_information, mae, Contingency};
pub use train::{
    evaluate, hard_clusters, metric_name, predict, train, EpochRecord, Evaluation, MetricsReport, Prediction,
    SATURATION_LEVEL,
};
