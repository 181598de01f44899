//! Command-line pipeline over the `delibench` engine.

pub mod config;
pub mod error;
pub mod manifest;
pub mod stages;

pub use config::{LoadedConfig, Overrides, RunConfig};
pub use error::CliError;
pub use stages::Ctx;
