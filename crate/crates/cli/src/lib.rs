//! Batch front end for `sparseperm`: configuration files, simulation, fitting,
//! benchmarking and on-disk artifacts.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod report;

pub use commands::{cmd_benchmark, cmd_fit, cmd_simulate, cmd_summarize, Overrides};
pub use error::CliError;
