//! Dataset ingestion, run configuration and the `hetrain` subcommands.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod run;

pub use config::RunConfig;
pub use error::{CliError, Result};
