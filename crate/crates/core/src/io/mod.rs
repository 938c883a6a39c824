//! Configuration, file formats and the experiment drivers used by the CLI.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, Experiment, ExperimentConfig};
