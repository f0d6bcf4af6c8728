//! Black-box tests of the `saddlesim` binary: exit codes, output files,
//! and rerun determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_saddlesim"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("saddlesim-cli-{tag}-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path
}

const PENNIES: &str = r#"
[game]
set_x = { kind = "simplex", dim = 2 }
set_y = { kind = "simplex", dim = 2 }
matrix = [[1.0, -1.0], [-1.0, 1.0]]

[run]
delta = 0.1
max_phases = 4
seed = 1
batch_c = 8.0
audit_enabled = true

[out]
dir = "out"
emit_svg = true
"#;

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn run_writes_the_full_output_bundle() {
    let dir = tmp_dir("bundle");
    let config = write_config(&dir, PENNIES);
    let out_dir = dir.join("run");
    let out = run_ok(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--json",
    ]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("\"final_avg_gap\""));
    for file in ["config.toml", "phase_log.csv", "round_log.csv", "summary.json", "gap.svg"] {
        assert!(out_dir.join(file).exists(), "{file} missing");
    }
    // The config copy is byte-identical to the input.
    assert_eq!(
        fs::read(&config).unwrap(),
        fs::read(out_dir.join("config.toml")).unwrap()
    );
    let summary = fs::read_to_string(out_dir.join("summary.json")).unwrap();
    assert!(summary.contains("final_avg_gap"));
    assert!(summary.contains("git_describe"));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn identical_runs_produce_identical_bytes() {
    let dir = tmp_dir("determinism");
    let config = write_config(&dir, PENNIES);
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    for out in [&out_a, &out_b] {
        run_ok(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    for file in ["phase_log.csv", "round_log.csv"] {
        assert_eq!(
            fs::read(out_a.join(file)).unwrap(),
            fs::read(out_b.join(file)).unwrap(),
            "{file} differs between identical runs"
        );
    }
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn bad_delta_exits_2_citing_the_bound() {
    let dir = tmp_dir("delta");
    let config = write_config(&dir, &PENNIES.replace("delta = 0.1", "delta = 0.7"));
    let out = bin()
        .args(["run", "--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("(0, 1/2]"), "stderr: {stderr}");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tmp_dir("unknown");
    let config = write_config(&dir, &PENNIES.replace("seed = 1", "seed = 1\nwarp = 9"));
    let out = bin()
        .args(["run", "--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn geometry_subcommands_report_certified_results() {
    let dir = tmp_dir("geo");
    let config = write_config(&dir, PENNIES);
    let cfg = config.to_str().unwrap();

    let spanner = run_ok(&["spanner", "--config", cfg, "--set", "x", "--json"]);
    let payload: serde_json::Value =
        serde_json::from_slice(&spanner.stdout).unwrap();
    assert!(payload["certified_bound"].as_f64().unwrap() <= payload["bound_limit"].as_f64().unwrap());

    let ellipsoid = run_ok(&["ellipsoid", "--config", cfg, "--set", "y", "--json"]);
    let payload: serde_json::Value = serde_json::from_slice(&ellipsoid.stdout).unwrap();
    let alpha = payload["alpha_eff"].as_f64().unwrap();
    assert!(alpha <= payload["alpha_limit"].as_f64().unwrap());

    let norms = run_ok(&["norms", "--config", cfg, "--vector", "3,-4", "--json"]);
    let payload: serde_json::Value = serde_json::from_slice(&norms.stdout).unwrap();
    assert_eq!(payload["primal"].as_f64().unwrap(), 7.0);
    assert_eq!(payload["dual"].as_f64().unwrap(), 4.0);

    let gap = run_ok(&["gap", "--config", cfg, "--x", "0.5,0.5", "--y", "0.5,0.5", "--json"]);
    let payload: serde_json::Value = serde_json::from_slice(&gap.stdout).unwrap();
    assert!(payload["gap"].as_f64().unwrap().abs() < 1e-12);

    // Infeasible point for the gap subcommand is a config error.
    let bad = bin()
        .args(["gap", "--config", cfg, "--x", "2.0,-1.0", "--y", "0.5,0.5"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn matrix_loads_from_dense_csv() {
    let dir = tmp_dir("csv");
    fs::write(dir.join("payoffs.csv"), "1.0, -1.0\n-1.0, 1.0\n").unwrap();
    let config = write_config(
        &dir,
        &PENNIES.replace(
            "matrix = [[1.0, -1.0], [-1.0, 1.0]]",
            "matrix_csv = \"payoffs.csv\"",
        ),
    );
    let out_dir = dir.join("run");
    run_ok(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out_dir.join("phase_log.csv").exists());

    // Ragged rows are a config error.
    fs::write(dir.join("payoffs.csv"), "1.0, -1.0\n-1.0\n").unwrap();
    let out = bin()
        .args(["run", "--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn rvu_check_passes_on_the_default_suite() {
    let out = run_ok(&["rvu-check", "--trials", "5", "--phases", "40", "--json"]);
    let payload: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let min_slack = payload["min_slack"].as_f64().unwrap();
    let tol = payload["audit_tol"].as_f64().unwrap();
    assert!(min_slack >= -tol);
}
