//! The analysis commands. Each produces its output files in memory; writing
//! them and the manifest is shared by all commands.

use std::fs;
use std::path::Path;
use std::time::Instant;

use fluxmech_core::bifurcation::{
    continuation_sweep, equilibrium, g_crit_analytic, hopf_threshold, limit_cycle_prediction, BranchData, HopfPoint,
    LimitCyclePrediction,
};
use fluxmech_core::dynamics::{integrate_with, recommended_sample_dt, IntegrateOptions, Trajectory};
use fluxmech_core::export::{csv_string, sha256_hex, Sidecar};
use fluxmech_core::ode::Tolerance;
use fluxmech_core::response::{chi_z_numeric, renormalized_model, response_curves, NumericResponseOptions, ResponseResult};
use fluxmech_core::sweep::{damping_map, response_surface, AxisSpec, FluxGridSpec};
use fluxmech_core::{Error, Model, SystemState};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::CliError;
use crate::manifest::{OutputFile, RunManifest, MANIFEST_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Response,
    Bifurcate,
    Map,
}

impl Command {
    pub const ALL: [Command; 4] = [Command::Simulate, Command::Response, Command::Bifurcate, Command::Map];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Response => "response",
            Command::Bifurcate => "bifurcate",
            Command::Map => "map",
        }
    }
}

/// One output file held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Output {
    fn new(name: &str, text: String) -> Self {
        Self {
            name: name.to_owned(),
            bytes: text.into_bytes(),
        }
    }
}

/// Outputs of a run; `failure` is set when the run stopped early, in which
/// case `outputs` holds whatever partial data was produced.
#[derive(Debug)]
pub struct RunResult {
    pub outputs: Vec<Output>,
    pub failure: Option<CliError>,
}

impl From<Result<Vec<Output>, CliError>> for RunResult {
    fn from(r: Result<Vec<Output>, CliError>) -> Self {
        match r {
            Ok(outputs) => Self { outputs, failure: None },
            Err(e) => Self {
                outputs: Vec::new(),
                failure: Some(e),
            },
        }
    }
}

fn stamp(run_id: &str, command: Command) -> String {
    format!("fluxmech run={run_id} command={}", command.name())
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

/// Runs `command` without touching the file system.
pub fn execute(command: Command, cfg: &Config, run_id: &str) -> RunResult {
    let comment = stamp(run_id, command);
    match command {
        Command::Simulate => simulate(cfg, &comment),
        Command::Response => response(cfg, &comment, run_id).into(),
        Command::Bifurcate => bifurcate(cfg, &comment, run_id).into(),
        Command::Map => map(cfg, &comment, run_id).into(),
    }
}

/// Runs `command` and writes its outputs and `manifest.json` into `out_dir`.
/// The manifest is written even when the run fails.
pub fn run_to_dir(command: Command, cfg: &Config, out_dir: &Path) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let mut manifest = RunManifest::new(command, cfg);
    let result = execute(command, cfg, &manifest.run_id);
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    for out in &result.outputs {
        let path = out_dir.join(&out.name);
        fs::write(&path, &out.bytes).map_err(|e| CliError::io(&path, e))?;
        manifest.outputs.push(OutputFile {
            file: out.name.clone(),
            sha256: sha256_hex(&out.bytes),
            bytes: out.bytes.len(),
        });
    }
    if let Some(e) = &result.failure {
        manifest.status = format!("failed: {e}");
    }
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    let path = out_dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_json()).map_err(|e| CliError::io(&path, e))?;
    match result.failure {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

/// Re-runs a manifest into `out_dir` and checks every output against its recorded hash.
pub fn replay(manifest: &RunManifest, out_dir: &Path) -> Result<RunManifest, CliError> {
    let cfg = manifest.config()?;
    let fresh = run_to_dir(manifest.command, &cfg, out_dir)?;
    let differing: Vec<&str> = manifest
        .outputs
        .iter()
        .filter(|o| !fresh.outputs.iter().any(|f| f.file == o.file && f.sha256 == o.sha256))
        .map(|o| o.file.as_str())
        .collect();
    if !differing.is_empty() || fresh.outputs.len() != manifest.outputs.len() {
        return Err(CliError::Check(format!("replay differs from manifest in: {}", differing.join(", "))));
    }
    Ok(fresh)
}

// simulate

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const PARTIAL_TRAJECTORY_FILE: &str = "trajectory.partial.csv";

fn trajectory_csv(traj: &Trajectory, comment: &str) -> String {
    let buf = traj.write_csv(Vec::new(), Some(comment)).expect("writing to memory");
    String::from_utf8(buf).expect("ASCII output")
}

fn simulate(cfg: &Config, comment: &str) -> RunResult {
    let prepare = || -> Result<(Model, SystemState, IntegrateOptions), CliError> {
        let model = Model::from_config(&cfg.model_config())?;
        let start = match cfg.run.initial_state {
            Some(y) => SystemState::from_array(&y),
            None => {
                let mut s = equilibrium(&model)?.state;
                s.alpha.re += cfg.run.kick;
                s
            }
        };
        let mut opts = IntegrateOptions::new(
            Tolerance::new(cfg.run.rtol, cfg.run.atol),
            cfg.run.sample_dt.unwrap_or_else(|| recommended_sample_dt(&model)),
        );
        opts.record_from = cfg.run.record_from;
        if let Some(n) = cfg.run.max_steps {
            opts.max_steps = n;
        }
        Ok((model, start, opts))
    };
    let (model, start, opts) = match prepare() {
        Ok(v) => v,
        Err(e) => return Err(e).into(),
    };
    match integrate_with(&model, &start, (0.0, cfg.run.t_end), &opts) {
        Ok(traj) => Ok(vec![Output::new(TRAJECTORY_FILE, trajectory_csv(&traj, comment))]).into(),
        Err(Error::Integration { t, reason, partial }) => {
            let note = format!("{comment} partial=true failed_at={t}");
            RunResult {
                outputs: vec![Output::new(PARTIAL_TRAJECTORY_FILE, trajectory_csv(&partial, &note))],
                failure: Some(CliError::Numeric(Error::Integration { t, reason, partial })),
            }
        }
        Err(e) => Err(e.into()).into(),
    }
}

// response

pub const RESPONSE_FILE: &str = "response.csv";
pub const RESPONSE_SUMMARY_FILE: &str = "response.json";

#[derive(Debug, Serialize)]
struct ResponseSummary {
    run_id: String,
    /// Renormalized mechanics at the configured detuning.
    renormalized: ResponseResult,
    /// Local maxima of `|Im chi|` on the frequency grid, per detuning.
    im_maxima: Vec<(f64, Vec<f64>)>,
}

fn default_omega_axis(model: &Model) -> AxisSpec {
    let top = 2.0 * model.mech.omega_m.max(model.rabi_magnitude());
    AxisSpec::new(top / 200.0, top, 200)
}

fn response(cfg: &Config, comment: &str, run_id: &str) -> Result<Vec<Output>, CliError> {
    let model = Model::from_config(&cfg.model_config())?;
    let deltas = cfg.run.delta.map_or_else(|| vec![model.delta], |a| a.values());
    let omegas = cfg.run.omega.unwrap_or_else(|| default_omega_axis(&model)).values();
    let tile = response_surface(&model, &deltas, &omegas)?;
    let layer = |name: &str| &tile.layer(name).expect("response layer").values;
    let (abs, arg, re, im) = (layer("abs_chi"), layer("arg_chi"), layer("re_chi"), layer("im_chi"));

    let points: Vec<(usize, usize)> = (0..deltas.len()).flat_map(|ix| (0..omegas.len()).map(move |iy| (ix, iy))).collect();
    let numeric: Option<Vec<_>> = if cfg.run.oracle {
        let opts = NumericResponseOptions::default();
        Some(
            points
                .par_iter()
                .map(|&(ix, iy)| chi_z_numeric(&model.with_delta(deltas[ix]), omegas[iy], &opts))
                .collect::<Result<Vec<_>, _>>()?,
        )
    } else {
        None
    };

    let mut header = vec!["omega", "delta", "re_chi", "im_chi", "abs_chi", "arg_chi"];
    if numeric.is_some() {
        header.extend(["re_chi_numeric", "im_chi_numeric", "rel_error"]);
    }
    let nx = deltas.len();
    let rows: Vec<Vec<f64>> = points
        .iter()
        .enumerate()
        .map(|(k, &(ix, iy))| {
            let i = iy * nx + ix;
            let mut r = vec![omegas[iy], deltas[ix], re[i], im[i], abs[i], arg[i]];
            if let Some(num) = &numeric {
                let c = num[k];
                // Undefined where the analytic response vanishes.
                let err = if abs[i] > 0.0 { (c.re - re[i]).hypot(c.im - im[i]) / abs[i] } else { f64::NAN };
                r.extend([c.re, c.im, err]);
            }
            r
        })
        .collect();

    let im_maxima = deltas
        .iter()
        .map(|&d| {
            let m = model.with_delta(d);
            if d == 0.0 && m.delta_n == 0.0 {
                return Ok((d, Vec::new()));
            }
            Ok((d, response_curves(&omegas, &m.derived()?)?.im_maxima))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let summary = ResponseSummary {
        run_id: run_id.to_owned(),
        renormalized: renormalized_model(&model)?,
        im_maxima,
    };
    Ok(vec![
        Output::new(RESPONSE_FILE, csv_string(Some(comment), &header, &rows)),
        Output::new(RESPONSE_SUMMARY_FILE, json(&summary)),
    ])
}

// bifurcate

pub const BRANCH_FILE: &str = "branch.csv";
pub const THRESHOLD_FILE: &str = "threshold.json";

#[derive(Debug, Serialize)]
pub struct ThresholdSummary {
    pub run_id: String,
    pub g_crit_analytic: Option<f64>,
    pub g_c_numeric: Option<f64>,
    /// `g_c_numeric / g_crit_analytic`.
    pub ratio: Option<f64>,
    pub hopf: Option<HopfPoint>,
    pub stability_changes: usize,
    pub truncated: Option<String>,
    /// Closed-form cycle at the largest `g` of the grid.
    pub prediction_at_g_max: Option<LimitCyclePrediction>,
}

fn bifurcate(cfg: &Config, comment: &str, run_id: &str) -> Result<Vec<Output>, CliError> {
    let model = Model::from_config(&cfg.model_config())?;
    let d = model.derived()?;
    let g_crit = g_crit_analytic(&d, &model.mech).ok();
    let axis = match (cfg.run.g, g_crit) {
        (Some(a), _) => a,
        (None, Some(gc)) => AxisSpec::new(0.5 * gc, 1.5 * gc, 21),
        (None, None) => {
            return Err(CliError::Config(
                "no closed-form threshold for these parameters; set run.g = { lo, hi, count }".into(),
            ))
        }
    };
    let grid = axis.values();
    let branch: BranchData = continuation_sweep(&model, &grid, cfg.run.cycles, None)?;
    let hopf = match branch.hopf_index {
        Some(h) => Some(hopf_threshold(&model, (grid[h - 1], grid[h]))?),
        None => None,
    };
    let g_max = grid[grid.len() - 1];
    let summary = ThresholdSummary {
        run_id: run_id.to_owned(),
        g_crit_analytic: g_crit,
        g_c_numeric: hopf.map(|h| h.g_c),
        ratio: hopf.zip(g_crit).map(|(h, gc)| h.g_c / gc),
        hopf,
        stability_changes: branch.stability_changes(),
        truncated: branch.truncated.clone(),
        prediction_at_g_max: limit_cycle_prediction(&d, &model.mech, g_max).ok(),
    };
    Ok(vec![
        Output::new(BRANCH_FILE, csv_string(Some(comment), &BranchData::CSV_HEADER, &branch.csv_rows())),
        Output::new(THRESHOLD_FILE, json(&summary)),
    ])
}

// map

pub const MAP_FILE: &str = "map.csv";
pub const MAP_SIDECAR_FILE: &str = "map.json";

#[derive(Debug, Serialize)]
struct MapParameters<'a> {
    run_id: &'a str,
    grid: FluxGridSpec,
    config: &'a Config,
}

pub fn flux_grid(cfg: &Config) -> FluxGridSpec {
    FluxGridSpec {
        phi_e0: cfg.run.phi_e0.unwrap_or(AxisSpec::new(-0.5, 3.5, 161)),
        phi_e1: cfg.run.phi_e1.unwrap_or(AxisSpec::new(0.0, 12.0, 241)),
        n_max: cfg.run.n_max,
    }
}

fn map(cfg: &Config, comment: &str, run_id: &str) -> Result<Vec<Output>, CliError> {
    let grid = flux_grid(cfg);
    let tile = damping_map(&grid, &cfg.model_config())?;
    let csv = tile.to_csv(Some(comment));
    let sidecar: Sidecar<_> = tile.sidecar(
        "damping_map",
        MAP_FILE,
        &csv,
        MapParameters {
            run_id,
            grid,
            config: cfg,
        },
    );
    let side = sidecar.to_json().expect("sidecar serializes");
    Ok(vec![Output::new(MAP_FILE, csv), Output::new(MAP_SIDECAR_FILE, side)])
}
