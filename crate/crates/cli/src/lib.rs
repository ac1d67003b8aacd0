//! Library side of the `stf` command-line tool: configuration, file formats
//! and the subcommands, callable without spawning a process.

pub mod commands;
pub mod config;
pub mod error;
pub mod format;

pub use commands::{
    cmd_atom_scan, cmd_evaluate, cmd_factorize, cmd_forecast, cmd_synth, GlobalOptions,
};
pub use config::RunConfig;
pub use error::{CliError, CliResult};
