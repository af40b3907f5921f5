//! Experiments, data ingestion, result files and the command-line interface
//! around `vmpost-core`.

pub mod config;
pub mod emit;
pub mod error;
pub mod experiments;
pub mod ingest;
pub mod interchange;
pub mod output;
pub mod regions;

pub use config::{ExperimentConfig, ExperimentKind, Method};
pub use error::{HarnessError, Result};
