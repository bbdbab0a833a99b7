//! Library side of the `sscov` command-line tool: experiment configuration,
//! the Monte Carlo runner, and exit-code mapping.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;

pub use config::{ExperimentConfig, Fixture};
pub use error::{CliError, Result};
pub use experiment::{classify_size, run_experiment, size_band, ExperimentOutput, SizeClass};
