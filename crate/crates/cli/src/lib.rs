//! Experiment runner for long-term sustainability vs. performance
//! evaluation: config files, run artifacts, sweeps and plots.

pub mod commands;
pub mod config;
pub mod models;
pub mod plot;
pub mod report;

pub use commands::{cmd_run, cmd_sweep, run_experiment, run_sweep, CliError, RunOutcome};
pub use config::{ConfigError, ExperimentConfig};
pub use models::{ModelId, ModelSpec};

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "SUSTAINEVAL_OUT_DIR";
