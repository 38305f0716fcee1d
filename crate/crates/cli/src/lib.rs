//! Config ingestion, the synthesize → certify → simulate pipeline, and
//! report/CSV emission for the `parstab` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use config::{parse_config, parse_config_str, RunConfig};
pub use error::CliError;
