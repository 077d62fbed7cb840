//! The acceptance suite: the core checks plus determinism of every command.

use fluxmech_core::export::sha256_hex;
use fluxmech_core::validation::{self, CriterionReport, CORE_CRITERIA};

use crate::commands::{execute, Command, Output};
use crate::config::Config;
use crate::manifest::{run_id, OutputFile, RunManifest};

pub const DETERMINISM_CRITERION: u32 = 10;

/// Small near-resonant configuration used to exercise every command.
pub const PROBE_CONFIG: &str = r#"
[drive]
eps0_phi_e0 = -0.1
eps0_phi_e1 = 0.0
omega_drive = 1.0
n_photon = 0
delta_gap = 0.1

[qubit]
gamma1 = 0.01
gamma2 = 0.01
sigma_z_eq = -1.0

[mech]
omega_m = 0.15556349186104046
gamma_m = 1e-3
g = 0.012

[run]
t_end = 3000.0
delta = { lo = -0.1, hi = 0.1, count = 3 }
omega = { lo = 0.05, hi = 0.25, count = 5 }
oracle = true
g = { lo = 0.008, hi = 0.02, count = 7 }
cycles = "beyond_hopf"
phi_e0 = { lo = -0.5, hi = 1.5, count = 41 }
phi_e1 = { lo = 0.0, hi = 6.0, count = 31 }
n_max = 1
"#;

fn with_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .expect("thread pool")
        .install(f)
}

fn hashes(outputs: &[Output]) -> Vec<OutputFile> {
    outputs
        .iter()
        .map(|o| OutputFile {
            file: o.name.clone(),
            sha256: sha256_hex(&o.bytes),
            bytes: o.bytes.len(),
        })
        .collect()
}

/// Runs each command with one and four worker threads, then replays it from
/// its serialized manifest, and compares the outputs byte for byte.
pub fn determinism_check() -> CriterionReport {
    let cfg = match Config::parse(PROBE_CONFIG, &[]) {
        Ok(c) => c,
        Err(e) => return CriterionReport::new(DETERMINISM_CRITERION, false, format!("probe config: {e}")),
    };
    let mut problems = Vec::new();
    let mut files = 0;
    for command in Command::ALL {
        let id = run_id(command, &cfg);
        let serial = with_threads(1, || execute(command, &cfg, &id));
        let parallel = with_threads(4, || execute(command, &cfg, &id));
        if let Some(e) = serial.failure.as_ref().or(parallel.failure.as_ref()) {
            problems.push(format!("{} failed: {e}", command.name()));
            continue;
        }
        if serial.outputs != parallel.outputs {
            problems.push(format!("{} differs between 1 and 4 threads", command.name()));
        }
        let mut manifest = RunManifest::new(command, &cfg);
        manifest.outputs = hashes(&serial.outputs);
        let replayed = RunManifest::from_json(&manifest.to_json()).and_then(|m| {
            let c = m.config()?;
            Ok((m.clone(), execute(m.command, &c, &run_id(m.command, &c))))
        });
        match replayed {
            Ok((m, r)) if r.failure.is_none() && hashes(&r.outputs) == m.outputs => {}
            Ok(_) => problems.push(format!("{} replay differs from manifest", command.name())),
            Err(e) => problems.push(format!("{} replay failed: {e}", command.name())),
        }
        files += serial.outputs.len();
    }
    let detail = if problems.is_empty() {
        format!("{} commands, {files} files byte-identical across 1/4 threads and manifest replay", Command::ALL.len())
    } else {
        problems.join("; ")
    };
    CriterionReport::new(DETERMINISM_CRITERION, problems.is_empty(), detail)
}

pub fn run_criterion(id: u32) -> CriterionReport {
    if id == DETERMINISM_CRITERION {
        determinism_check()
    } else {
        validation::run(id)
    }
}

pub fn all_criteria() -> Vec<u32> {
    (1..=CORE_CRITERIA).chain([DETERMINISM_CRITERION]).collect()
}
