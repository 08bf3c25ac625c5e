//! Command-line front end: configuration, output formats and subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod format;
pub mod output;

pub use commands::{run, Invocation, Subcommand};
pub use config::RunConfig;
pub use error::{CliError, CliResult};
