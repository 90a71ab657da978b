//! Experiment harness for the `drghmc` samplers: config parsing, parallel
//! chains, reference generation, metrics, sweeps and figure tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;

pub use cli::{run, Cli, Command};
pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
