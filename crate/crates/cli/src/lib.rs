//! Command-line driver for vis-yield: strict JSON experiment configs,
//! multi-seed estimation sweeps, estimator comparison tables and yield
//! optimization traces.

pub mod commands;
pub mod config;
pub mod table;

pub use commands::{CliError, Overrides, EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_OK};
pub use config::{ConfigError, ExperimentConfig, Method};
pub use table::ComparisonTable;
