//! Command-line orchestration of the PCAT perfusion pipeline: configuration,
//! stage execution, CSV/TOML reporting and SVG charts.

pub mod bundle;
pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod plot;
pub mod tables;

pub use config::RunConfig;
pub use error::{CliError, CliResult, Stage};
pub use pipeline::{run_pipeline, run_with_threads, RunReport};
