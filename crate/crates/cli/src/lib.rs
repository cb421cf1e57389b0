//! Experiment pipeline behind the `cgprune` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod store;

pub use error::{CliError, CliResult};
