//! Staged orchestration: extraction and importance, SAE training, manifold
//! reports, steering curves, and report emission.

mod config;
mod dataset;
pub mod plots;
mod report;
mod seeds;
mod stages;

pub use config::{ArtifactGridConfig, ModelSource, RunConfig, Stage, StageSelection, SEED_ENV};
pub use dataset::{write_toy_activations, TOY_MODEL_NAME};
pub use plots::{emit_plots, PLOTS_DIR};
pub use report::{
    ArtifactManifolds, RunReport, Stage1Output, Stage2Layer, Stage2Output, Stage3Output,
    Stage4Output, REPORT_FILE, REPORT_FORMAT_VERSION, REPORT_SCHEMA,
};
pub use seeds::sub_seed;
pub use stages::{Pipeline, ACTIVATIONS_DIR, SAE_DIR};
