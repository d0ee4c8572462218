//! Command-line front end for `fptmc-core`: TOML configuration, a worker
//! pool, CPU timing and the CSV outputs.

pub mod commands;
pub mod config;
pub mod output;
pub mod runner;

pub use commands::AppError;
pub use config::{load_config, parse_config, ConfigError, RunConfig};
