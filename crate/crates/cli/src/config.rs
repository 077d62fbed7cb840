//! Run configuration: a TOML file with `[drive]`, `[qubit]`, `[mech]` and
//! `[run]` sections, plus `section.key=value` overrides.

use std::fs;
use std::path::Path;

use fluxmech_core::bifurcation::CycleMode;
use fluxmech_core::sweep::AxisSpec;
use fluxmech_core::{DriveParams, MechanicalParams, ModelConfig, QubitParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub drive: DriveParams,
    pub qubit: QubitParams,
    pub mech: MechanicalParams,
    #[serde(default)]
    pub run: RunSection,
}

/// Per-command settings. Grids are inline tables `{ lo = .., hi = .., count = .. }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Angular frequency all rates are expressed in; recorded, not rescaled.
    pub frequency_unit: f64,
    pub t_end: f64,
    pub rtol: f64,
    pub atol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_from: Option<f64>,
    /// `[Re s_-, Im s_-, s_z, Re alpha, Im alpha]`; the equilibrium plus `kick` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<[f64; 5]>,
    /// Offset added to `Re alpha` when starting from the equilibrium.
    pub kick: f64,
    /// Step budget of one integration.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<AxisSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<AxisSpec>,
    /// Append the simulated response next to the analytic one.
    pub oracle: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<AxisSpec>,
    pub cycles: CycleMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_e0: Option<AxisSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_e1: Option<AxisSpec>,
    pub n_max: u32,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            frequency_unit: 1.0,
            t_end: 1e4,
            rtol: 1e-10,
            atol: 1e-12,
            sample_dt: None,
            record_from: None,
            initial_state: None,
            kick: 1e-3,
            max_steps: None,
            omega: None,
            delta: None,
            oracle: false,
            g: None,
            cycles: CycleMode::BeyondHopf,
            phi_e0: None,
            phi_e1: None,
            n_max: 3,
        }
    }
}

/// Parses `lo:hi:count`.
pub fn parse_axis(s: &str) -> Result<AxisSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("expected lo:hi:count, got `{s}`"));
    }
    let num = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}"));
    let count = parts[2].trim().parse::<usize>().map_err(|e| format!("`{}`: {e}", parts[2]))?;
    Ok(AxisSpec::new(num(parts[0])?, num(parts[1])?, count))
}

fn override_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_owned()),
    }
}

/// Applies `section.key=value` to a parsed document. Values are TOML literals;
/// anything that does not parse is taken as a string.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` must look like section.key=value")))?;
    let (section, field) = key
        .trim()
        .split_once('.')
        .ok_or_else(|| CliError::Config(format!("override key `{key}` must look like section.key")))?;
    let table = doc
        .entry(section.to_owned())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        .as_table_mut()
        .ok_or_else(|| CliError::Config(format!("`{section}` is not a section")))?;
    table.insert(field.to_owned(), override_value(raw.trim()));
    Ok(())
}

impl Config {
    /// Parses a document and applies overrides. Errors carry the line and
    /// field from the TOML parser.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let diag = |e: toml::de::Error| CliError::Config(e.to_string().trim_end().to_owned());
        // Parse once untouched so that errors point into the file.
        let cfg: Config = toml::from_str(text).map_err(diag)?;
        let cfg = if overrides.is_empty() {
            cfg
        } else {
            let mut doc: toml::Table = text.parse().map_err(diag)?;
            for o in overrides {
                apply_override(&mut doc, o)?;
            }
            Config::deserialize(toml::Value::Table(doc))
                .map_err(|e| CliError::Config(format!("after overrides: {}", e.to_string().trim_end())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, overrides).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model_config().validate()?;
        let r = &self.run;
        if !(r.t_end > 0.0 && r.t_end.is_finite()) {
            return Err(CliError::Config("run.t_end must be positive".into()));
        }
        for (name, axis) in [("run.omega", r.omega), ("run.delta", r.delta), ("run.g", r.g), ("run.phi_e0", r.phi_e0), ("run.phi_e1", r.phi_e1)] {
            if let Some(a) = axis {
                a.validate("axis").map_err(|e| CliError::Config(format!("{name}: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            drive: self.drive,
            qubit: self.qubit,
            mech: self.mech,
            frequency_unit: self.run.frequency_unit,
        }
    }

    /// Canonical text form; parsing it gives back the same configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}
