//! Command-line front end: configuration, commands, manifests and the self-test.

pub mod commands;
pub mod config;
mod error;
pub mod manifest;
pub mod selftest;

pub use commands::{execute, replay, run_to_dir, Command};
pub use config::Config;
pub use error::CliError;
pub use manifest::RunManifest;
