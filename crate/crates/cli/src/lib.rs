//! Command-line front end: configuration, subcommands, artifacts and the
//! acceptance run.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod validate;
