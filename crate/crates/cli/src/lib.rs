//! Experiment runner for `turnpike-core`: TOML run configs, the
//! `solve`/`steady`/`optimize`/`turnpike`/`sweep`/`check` commands, and
//! CSV/JSON artifacts.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{run, Command, Outcome};
pub use config::RunConfig;
pub use error::CliError;
