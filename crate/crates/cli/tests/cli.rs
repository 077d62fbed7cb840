use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fluxmech_cli::selftest::PROBE_CONFIG;
use fluxmech_core::sweep::damping_correction;
use fluxmech_core::ModelConfig;
use tempfile::TempDir;

fn fluxmech(args: &[&str]) -> Output {
    fluxmech_env(args, &[])
}

fn fluxmech_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fluxmech"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn fluxmech")
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
}

fn shipped(name: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    p.to_str().unwrap().to_owned()
}

fn probe(tmp: &TempDir) -> String {
    let p = tmp.path().join("probe.toml");
    fs::write(&p, PROBE_CONFIG).unwrap();
    p.to_str().unwrap().to_owned()
}

fn out_dir(tmp: &TempDir, name: &str) -> PathBuf {
    tmp.path().join(name)
}

/// Data rows of a CSV with a `#` comment line and a header.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn config_error_reports_line_and_exits_2() {
    let tmp = TempDir::new().unwrap();
    let bad = PROBE_CONFIG.replace("gamma_m = 1e-3", "gamma_m = 1e-3\nq_factor = 10");
    let path = tmp.path().join("bad.toml");
    fs::write(&path, bad).unwrap();
    let out = fluxmech(&["simulate", "-c", path.to_str().unwrap(), "-o", out_dir(&tmp, "o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line"), "{stderr}");
    assert!(stderr.contains("q_factor"), "{stderr}");
}

#[test]
fn invalid_parameter_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = probe(&tmp);
    let out = fluxmech(&["simulate", "-c", &cfg, "-o", out_dir(&tmp, "o").to_str().unwrap(), "--set", "qubit.gamma2=-1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_thread_count_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = probe(&tmp);
    let out = fluxmech_env(&["map", "-c", &cfg, "-o", out_dir(&tmp, "o").to_str().unwrap()], &[("FLUXMECH_THREADS", "zero")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_4() {
    let tmp = TempDir::new().unwrap();
    let cfg = probe(&tmp);
    let file = tmp.path().join("occupied");
    fs::write(&file, "x").unwrap();
    let out = fluxmech(&["response", "-c", &cfg, "-o", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    let missing = fluxmech(&["response", "-c", "/nonexistent/cfg.toml", "-o", out_dir(&tmp, "o").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(4));
}

#[test]
fn exhausted_step_budget_keeps_partial_output() {
    let tmp = TempDir::new().unwrap();
    let dir = out_dir(&tmp, "o");
    let out = fluxmech(&["simulate", "-c", &shipped("free_oscillator.toml"), "-o", dir.to_str().unwrap(), "--set", "run.max_steps=20"]);
    assert_eq!(out.status.code(), Some(3));
    let (_, rows) = read_csv(&dir.join("trajectory.partial.csv"));
    assert!(!rows.is_empty());
    let manifest = read_json(&dir.join("manifest.json"));
    assert!(manifest["status"].as_str().unwrap().starts_with("failed"));
}

#[test]
fn free_oscillator_decays_exactly() {
    let tmp = TempDir::new().unwrap();
    let dir = out_dir(&tmp, "o");
    assert_ok(&fluxmech(&["simulate", "-c", &shipped("free_oscillator.toml"), "-o", dir.to_str().unwrap()]));
    let (header, rows) = read_csv(&dir.join("trajectory.csv"));
    let (t, re, im) = (column(&header, "t"), column(&header, "re_alpha"), column(&header, "im_alpha"));
    let (omega_m, gamma_m) = (0.15, 1e-3);
    let dt = rows[1][t] - rows[0][t];
    assert!(rows.last().unwrap()[t] > 2000.0 - dt);
    for row in &rows {
        let decay = (-0.5 * gamma_m * row[t]).exp();
        let phase = omega_m * row[t];
        assert!((row[re] - decay * phase.cos()).abs() < 1e-6, "t={}", row[t]);
        assert!((row[im] + decay * phase.sin()).abs() < 1e-6, "t={}", row[t]);
    }
}

#[test]
fn limit_cycle_config_grows_then_saturates() {
    let tmp = TempDir::new().unwrap();
    let dir = out_dir(&tmp, "o");
    assert_ok(&fluxmech(&["simulate", "-c", &shipped("limit_cycle.toml"), "-o", dir.to_str().unwrap()]));
    let (header, rows) = read_csv(&dir.join("trajectory.csv"));
    let (re, im) = (column(&header, "re_alpha"), column(&header, "im_alpha"));
    let abs: Vec<f64> = rows.iter().map(|r| r[re].hypot(r[im])).collect();
    let chunk = abs.len() / 8;
    let peaks: Vec<f64> = abs.chunks(chunk).map(|c| c.iter().cloned().fold(0.0, f64::max)).collect();
    let first = peaks[0];
    let (late, last) = (peaks[peaks.len() - 2], peaks[peaks.len() - 1]);
    assert!(late > 20.0 * first, "no growth: {peaks:?}");
    assert!((last / late - 1.0).abs() < 0.02, "not saturated: {peaks:?}");
}

#[test]
fn replay_reproduces_every_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = probe(&tmp);
    for command in ["simulate", "response", "bifurcate", "map"] {
        let first = out_dir(&tmp, &format!("{command}-a"));
        let again = out_dir(&tmp, &format!("{command}-b"));
        assert_ok(&fluxmech(&[command, "-c", &cfg, "-o", first.to_str().unwrap()]));
        assert_ok(&fluxmech(&["replay", first.to_str().unwrap(), "-o", again.to_str().unwrap()]));
        let manifest = read_json(&first.join("manifest.json"));
        for output in manifest["outputs"].as_array().unwrap() {
            let name = output["file"].as_str().unwrap();
            assert_eq!(fs::read(first.join(name)).unwrap(), fs::read(again.join(name)).unwrap(), "{command}/{name}");
        }
    }
}

#[test]
fn replay_detects_tampered_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = probe(&tmp);
    let dir = out_dir(&tmp, "o");
    assert_ok(&fluxmech(&["response", "-c", &cfg, "-o", dir.to_str().unwrap()]));
    let path = dir.join("manifest.json");
    let mut manifest = read_json(&path);
    manifest["outputs"][0]["sha256"] = serde_json::Value::from("0".repeat(64));
    fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    let out = fluxmech(&["replay", path.to_str().unwrap(), "-o", out_dir(&tmp, "r").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn response_is_odd_in_detuning_and_matches_oracle() {
    let tmp = TempDir::new().unwrap();
    let cfg = probe(&tmp);
    let dir = out_dir(&tmp, "o");
    assert_ok(&fluxmech(&["response", "-c", &cfg, "-o", dir.to_str().unwrap(), "--omega", "0.05:0.25:9"]));
    let (header, rows) = read_csv(&dir.join("response.csv"));
    let (w, d, re, im, err) = (
        column(&header, "omega"),
        column(&header, "delta"),
        column(&header, "re_chi"),
        column(&header, "im_chi"),
        column(&header, "rel_error"),
    );
    let omega_m = 0.15556349186104046;
    for row in &rows {
        if row[d] == 0.0 {
            assert_eq!((row[re].to_bits(), row[im].to_bits()), (0, 0));
            assert!(row[err].is_nan());
            let (nre, nim) = (column(&header, "re_chi_numeric"), column(&header, "im_chi_numeric"));
            assert!(row[nre].hypot(row[nim]) < 1e-3);
            continue;
        }
        if row[d] < 0.0 && (row[w] - omega_m).abs() < 0.02 {
            assert!(row[im] > 0.0);
        }
        assert!(row[err] < 0.15, "oracle error {} at omega={} delta={}", row[err], row[w], row[d]);
        let mirror = rows.iter().find(|r| r[w] == row[w] && r[d] == -row[d]).unwrap();
        assert!((row[re] + mirror[re]).abs() <= 1e-12 * row[re].abs().max(1.0));
        assert!((row[im] + mirror[im]).abs() <= 1e-12 * row[im].abs().max(1.0));
    }
}

#[test]
fn threshold_summary_reports_both_thresholds() {
    let tmp = TempDir::new().unwrap();
    let cfg = probe(&tmp);
    let dir = out_dir(&tmp, "o");
    assert_ok(&fluxmech(&["bifurcate", "-c", &cfg, "-o", dir.to_str().unwrap()]));
    let summary = read_json(&dir.join("threshold.json"));
    let analytic = summary["g_crit_analytic"].as_f64().unwrap();
    let numeric = summary["g_c_numeric"].as_f64().unwrap();
    let ratio = summary["ratio"].as_f64().unwrap();
    assert!((ratio - numeric / analytic).abs() < 1e-12);
    assert!((ratio - 1.0).abs() < 0.05);
    assert_eq!(summary["stability_changes"].as_u64(), Some(1));
    let (header, rows) = read_csv(&dir.join("branch.csv"));
    assert_eq!(header.len(), 24);
    assert_eq!(rows.len(), 7);
}

#[test]
fn branch_below_threshold_is_stable() {
    let tmp = TempDir::new().unwrap();
    let cfg = probe(&tmp);
    let dir = out_dir(&tmp, "o");
    assert_ok(&fluxmech(&["bifurcate", "-c", &cfg, "-o", dir.to_str().unwrap(), "--g", "0.0:0.01:6", "--cycles", "none"]));
    let (header, rows) = read_csv(&dir.join("branch.csv"));
    let stable = column(&header, "stable");
    assert!(rows.iter().all(|r| r[stable] == 1.0));
    assert_eq!(read_json(&dir.join("threshold.json"))["stability_changes"].as_u64(), Some(0));
}

#[test]
fn map_reduces_to_zero_photon_order_without_ac_flux() {
    let tmp = TempDir::new().unwrap();
    let cfg = probe(&tmp);
    let dir = out_dir(&tmp, "o");
    assert_ok(&fluxmech(&["map", "-c", &cfg, "-o", dir.to_str().unwrap()]));
    let (header, rows) = read_csv(&dir.join("map.csv"));
    let (x, y, dg) = (column(&header, "eps0_phi_e0"), column(&header, "eps0_phi_e1"), column(&header, "delta_gamma_m"));
    let base: ModelConfig = {
        let value: toml::Value = toml::from_str(PROBE_CONFIG).unwrap();
        let mut table = value.as_table().unwrap().clone();
        table.remove("run");
        toml::Value::Table(table).try_into().unwrap()
    };
    let mut checked = 0;
    for row in rows.iter().filter(|r| r[y] == 0.0) {
        // Higher orders carry J_n(0) = 0, so only the n = 0 window contributes.
        let (expected, _) = damping_correction(row[x], 0.0, &base, 0).unwrap();
        assert_eq!(row[dg], expected);
        checked += 1;
    }
    assert_eq!(checked, 41);
}

#[test]
fn map_is_independent_of_thread_count() {
    let tmp = TempDir::new().unwrap();
    let cfg = probe(&tmp);
    let mut files = Vec::new();
    for threads in ["1", "3"] {
        let dir = out_dir(&tmp, threads);
        assert_ok(&fluxmech_env(&["map", "-c", &cfg, "-o", dir.to_str().unwrap()], &[("FLUXMECH_THREADS", threads)]));
        files.push((fs::read(dir.join("map.csv")).unwrap(), fs::read(dir.join("map.json")).unwrap()));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn selftest_runs_selected_criteria() {
    let out = fluxmech(&["selftest", "--criteria", "1,5"]);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 2, "{stdout}");
    assert!(lines[0].starts_with("criterion  1 PASS"));
    assert!(lines[1].starts_with("criterion  5 PASS"));
}
