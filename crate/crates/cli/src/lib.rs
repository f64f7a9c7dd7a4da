//! Configuration, file formats, chain storage, and the subcommands of the
//! `netglm` command-line tool.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod store;

pub use commands::{cmd_bench, cmd_compare, cmd_fit, cmd_predict, cmd_simulate, FitOptions};
pub use config::RunConfig;
pub use error::{CliError, CliResult};
