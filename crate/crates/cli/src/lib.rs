//! Config parsing and subcommand runner behind the `cascade` binary.

pub mod config;
pub mod run;

pub use config::{parse_config, ConfigError, RunConfig};
pub use run::{run, Command, Manifest, RunReport};
