//! Command-line driver for `marginlab-core`: configuration files, on-disk
//! formats and the four commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
