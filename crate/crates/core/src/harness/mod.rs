//! Synthetic data, experiment configuration, runners, reports and the
//! acceptance suite.

pub mod acceptance;
pub mod config;
pub mod data;
pub mod report;
mod run;

pub use acceptance::{run_acceptance, run_criteria, AcceptanceReport, CriterionResult};
pub use config::{
    CheckSpec, ContrastiveSpec, ExperimentConfig, ExperimentKind, GaussianSpec, LearnedSpec, RskSpec, StringSpec,
};
pub use report::{Check, MetricSeries, RunReport, METRICS_FILE, REPORT_FILE};
pub use run::{
    edit_distance_oracle, gradcheck_instance, pretrained_model, prefit_surrogate, random_box_pairs, run,
    softmax_baseline, string_split, GRADCHECK_TOLERANCE, IOU_MC_TOLERANCE,
};
