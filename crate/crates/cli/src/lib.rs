//! Library side of the `ipnas` command-line tool: run configuration and the
//! command implementations, kept out of `main` so they can be tested
//! in-process.

pub mod commands;
pub mod config;

pub use commands::CliError;
pub use config::RunConfig;
