//! Command-line front end for the `rsg-core` solvers: TOML configuration,
//! command dispatch, parallel Monte Carlo and JSON/CSV reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod parallel;
pub mod report;

pub use commands::{run, Command, Outcome};
pub use config::{load_config, parse_config, ConfigError, RunConfig};
pub use error::RunError;
