//! Experiment orchestration for lmsnn: configuration, the train / label /
//! test pipeline, parameter grids and artifact export.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

pub use config::RunConfig;
pub use error::CliError;
