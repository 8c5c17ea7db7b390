//! Experiment runners for the `ksnr` command-line tool.

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{Experiment, ExperimentConfig, ResolvedConfig, Scale};
pub use experiments::{run_experiment, RunOutput};
