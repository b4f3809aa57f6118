//! Experiment harness around `sili-core`: configuration files, multi-seed
//! runs, metrics and plots, checkpoints, trajectory logs and β sweeps.

pub mod analysis;
pub mod checkpoint;
pub mod config;
pub mod outputs;
pub mod plot;
pub mod run;
pub mod sweep;
pub mod trajlog;

pub use config::ExperimentConfig;
pub use run::{run_experiment, ExperimentResult};

/// A problem with the user's configuration (CLI exit code 2).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("configuration error: {0}")]
pub struct ConfigError(pub String);
