//! Configuration-driven front end for the eigenvalue workbench: parse
//! a JSON experiment config, run it reproducibly, and emit CSV tables
//! plus a manifest suitable for downstream reporting.

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use experiments::{run_config, RunManifest, RunSummary, SummaryRow};
