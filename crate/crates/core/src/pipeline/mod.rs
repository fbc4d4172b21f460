//! Configuration-driven experiment runs and their file formats.

pub mod config;
pub mod data;
pub mod report;
pub mod run;
pub mod synth;

pub use config::{Method, Normalization, RunConfig, ViewConfig};
pub use data::{
    load_feature_matrix, load_labels, write_feature_binary, write_feature_csv, write_labels,
};
pub use report::{emit_report, load_report, RunReport, RunSummary};
pub use run::{run_on_views, run_pipeline, PipelineError, Stage};
pub use synth::{make_synthetic, ConfusionPlan, SyntheticConfig, SyntheticData};
