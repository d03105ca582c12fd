//! Library side of the `uq` command: configuration, problem assembly,
//! experiment stages and run manifests.

pub mod config;
pub mod error;
pub mod experiment;
pub mod manifest;
pub mod problem;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use experiment::run_experiment;
pub use manifest::RunManifest;
