//! Run manifests: everything needed to reproduce a run and check its outputs.

use serde::{Deserialize, Serialize};

use fluxmech_core::export::sha256_hex;

use crate::commands::Command;
use crate::config::Config;
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    /// Hash of the command and resolved configuration, stamped on every output.
    pub run_id: String,
    pub config_sha256: String,
    /// Resolved configuration in canonical TOML.
    pub config: String,
    /// The same configuration as structured data.
    pub parameters: serde_json::Value,
    pub threads: usize,
    pub wall_time_s: f64,
    /// `ok`, or the failure that ended the run.
    pub status: String,
    pub outputs: Vec<OutputFile>,
}

/// Identifier of a run: the first 16 hex digits of the hash of the command
/// name and canonical configuration.
pub fn run_id(command: Command, config: &Config) -> String {
    let text = format!("{}\n{}", command.name(), config.to_toml());
    sha256_hex(text.as_bytes())[..16].to_owned()
}

impl RunManifest {
    pub fn new(command: Command, config: &Config) -> Self {
        let text = config.to_toml();
        Self {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            command,
            run_id: run_id(command, config),
            config_sha256: sha256_hex(text.as_bytes()),
            config: text,
            parameters: serde_json::to_value(config).expect("configuration serializes"),
            threads: rayon::current_num_threads(),
            wall_time_s: 0.0,
            status: "ok".to_owned(),
            outputs: Vec::new(),
        }
    }

    pub fn config(&self) -> Result<Config, CliError> {
        Config::parse(&self.config, &[])
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("manifest: {e}")))
    }
}
