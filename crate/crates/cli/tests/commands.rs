use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(dir: &Path, subcommand: &str, config: &str, extra: &[&str]) -> (Output, PathBuf) {
    let config_path = dir.join(format!("{subcommand}.json"));
    fs::write(&config_path, config).unwrap();
    let out = dir.join(format!("out-{subcommand}"));
    let output = Command::new(env!("CARGO_BIN_EXE_wavegame"))
        .arg(subcommand)
        .arg("--config")
        .arg(&config_path)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    (output, out)
}

fn ok(dir: &Path, subcommand: &str, config: &str) -> PathBuf {
    let (output, out) = run(dir, subcommand, config, &[]);
    assert!(
        output.status.success(),
        "{subcommand} failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn columns(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn phase_portrait_files() {
    let tmp = TempDir::new().unwrap();
    let out = ok(tmp.path(), "phase-portrait", r#"{"c": 0.1}"#);
    for name in ["gamma0.csv", "gamma1.csv", "invariant_region.csv", "equilibria.json", "resolved_config.json"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let eq = json(&out.join("equilibria.json"));
    assert!(eq["gamma0_end_distance"].as_f64().unwrap() <= 1.01e-6);
    assert_eq!(eq["equilibria"][1]["kind"], "spiral_sink");
    let (header, rows) = columns(&out.join("gamma0.csv"));
    assert_eq!(header, ["s", "u", "p", "energy"]);
    assert!(rows.len() > 100);
}

#[test]
fn zero_speed_conserves_energy() {
    let tmp = TempDir::new().unwrap();
    let out = ok(tmp.path(), "phase-portrait", r#"{"c": 0.0}"#);
    let (_, rows) = columns(&out.join("gamma0.csv"));
    let e0 = rows[0][3];
    assert!(rows.iter().all(|r| (r[3] - e0).abs() < 1e-9));
    assert_eq!(json(&out.join("equilibria.json"))["equilibria"][1]["kind"], "centre");
}

#[test]
fn config_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let (output, _) = run(tmp.path(), "phase-portrait", r#"{"nonlinearity": {"kind": "cubic", "eta": 1.5}}"#, &[]);
    assert_eq!(output.status.code(), Some(2));
    let (output, _) = run(tmp.path(), "speed-maps", r#"{"speed_maps": {"lambdas": []}}"#, &[]);
    assert_eq!(output.status.code(), Some(2));
    let (output, _) = run(tmp.path(), "verify", "{not json", &[]);
    assert_eq!(output.status.code(), Some(2));
    let missing = Command::new(env!("CARGO_BIN_EXE_wavegame")).arg("verify").output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn monotone_wave_and_too_fast_speed() {
    let tmp = TempDir::new().unwrap();
    let out = ok(tmp.path(), "build-wave", r#"{"lambda": 0.79, "c": 0.05}"#);
    let report = json(&out.join("validity_report.json"));
    assert_eq!(report["all_passed"], true);
    let (header, rows) = columns(&out.join("wave.csv"));
    assert_eq!(header, ["s", "theta", "theta_prime", "m"]);
    assert!(rows.windows(2).all(|w| w[1][1] > w[0][1]));
    let (output, _) = run(tmp.path(), "build-wave", r#"{"lambda": 0.79, "c": 0.1}"#, &[]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("speed too large"));
}

#[test]
fn bump_and_periodic_waves() {
    let tmp = TempDir::new().unwrap();
    let out = ok(tmp.path(), "build-wave", r#"{"lambda": 0.39, "c": 0.02, "k": 1}"#);
    assert_eq!(json(&out.join("validity_report.json"))["all_passed"], true);
    let periodic = tmp.path().join("periodic");
    fs::create_dir(&periodic).unwrap();
    let out = ok(&periodic, "build-wave", r#"{"lambda": 0.39, "c": 0.02, "periodic": true}"#);
    let report = json(&out.join("validity_report.json"));
    assert_eq!(report["all_passed"], true);
    let (_, rows) = columns(&out.join("wave.csv"));
    let (first, last) = (&rows[0], &rows[rows.len() - 1]);
    assert!((first[1] - last[1]).abs() < 1e-6);
}

#[test]
fn speed_map_columns_are_ordered() {
    let tmp = TempDir::new().unwrap();
    let out = ok(tmp.path(), "speed-maps", r#"{"speed_maps": {"lambdas": [0.5, 1, 2, 4], "k_max": 1}}"#);
    let (header, rows) = columns(&out.join("speedmaps.csv"));
    assert_eq!(header, ["lambda", "c0", "c1"]);
    assert!(rows.windows(2).all(|w| w[1][1] < w[0][1] && w[1][2] <= w[0][2]));
    assert!(rows.iter().all(|r| r[1] >= r[2]));
    assert!(json(&out.join("speedmaps.json"))["c_max"].as_f64().unwrap() > 0.0);
}

#[test]
fn verify_certifies_the_convex_regime() {
    let tmp = TempDir::new().unwrap();
    let out = ok(tmp.path(), "verify", r#"{"lambda": 2.0, "c_fraction": 0.9}"#);
    let report = json(&out.join("equilibrium_report.json"));
    let mut keys: Vec<_> = report.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    assert_eq!(
        keys,
        ["certified", "feedback_residual", "lambda0", "probes", "s_minus", "value_identity_residual"]
    );
    assert_eq!(report["certified"], true);
    assert!(report["s_minus"].as_f64().unwrap() < 0.0);
}

#[test]
fn simulate_baseline_and_reversed() {
    let tmp = TempDir::new().unwrap();
    let out = ok(tmp.path(), "simulate", r#"{"T": 40, "simulate": {"mode": "baseline", "stride": 20}}"#);
    let summary = json(&out.join("simulation.json"));
    let speed = summary["fitted_speed"].as_f64().unwrap();
    let exact = summary["closed_form_speed"].as_f64().unwrap();
    assert!((speed - exact).abs() < 0.02 * exact.abs());
    let (header, _) = columns(&out.join("front.csv"));
    assert_eq!(header, ["t", "front_x"]);

    let reversed = tmp.path().join("reversed");
    fs::create_dir(&reversed).unwrap();
    let out = ok(
        &reversed,
        "simulate",
        r#"{"c": 0.08, "T": 20, "simulate": {"mode": "reversed", "stride": 20}}"#,
    );
    let summary = json(&out.join("simulation.json"));
    assert!((summary["fitted_speed"].as_f64().unwrap() - 0.08).abs() < 0.01);
    assert!(summary["shape_error"].as_f64().unwrap() < 0.05);
}

#[test]
fn front_leaving_the_domain_exits_one() {
    let tmp = TempDir::new().unwrap();
    let (output, _) = run(
        tmp.path(),
        "simulate",
        r#"{"T": 200, "simulate": {"mode": "reversed", "half_width": 6}}"#,
        &[],
    );
    assert_eq!(output.status.code(), Some(1), "{}", String::from_utf8_lossy(&output.stderr));
}

#[test]
fn cooperation_report() {
    let tmp = TempDir::new().unwrap();
    let out = ok(
        tmp.path(),
        "cooperate",
        r#"{"cooperate": {"lambda0": 0.12, "divisor": 32, "samples": 8, "dx": 0.2, "dt": 0.1, "output_every": 50}}"#,
    );
    let report = json(&out.join("cooperation.json"));
    assert_eq!(report["samples"].as_array().unwrap().len(), 8);
    assert!(report["invasion"]["T_detect"].as_f64().unwrap() > 0.0);
    assert!(report["mass_defect"].as_f64().unwrap() < 1e-8);
    let (header, _) = columns(&out.join("space_time.csv"));
    assert_eq!(header, ["t", "x", "theta", "m"]);
}

#[test]
fn unreachable_recovery_exits_one() {
    let tmp = TempDir::new().unwrap();
    let (output, _) = run(
        tmp.path(),
        "cooperate",
        r#"{"cooperate": {"lambda0": 0.12, "divisor": 2, "samples": 2, "delta": 1e-12, "dx": 0.2, "dt": 0.1}}"#,
        &[],
    );
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("did not recover"));
}

#[test]
fn outputs_are_deterministic_and_quiet_is_silent() {
    let tmp = TempDir::new().unwrap();
    let config = r#"{"lambda": 2.0, "c_fraction": 0.9}"#;
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    fs::create_dir(&a).unwrap();
    fs::create_dir(&b).unwrap();
    let (first, out_a) = run(&a, "verify", config, &["--quiet"]);
    let (_, out_b) = run(&b, "verify", config, &["--quiet"]);
    assert!(first.status.success());
    assert!(first.stdout.is_empty());
    for name in ["equilibrium_report.json", "value_function.csv"] {
        assert_eq!(fs::read(out_a.join(name)).unwrap(), fs::read(out_b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn resolved_config_echoes_defaults() {
    let tmp = TempDir::new().unwrap();
    let out = ok(tmp.path(), "phase-portrait", r#"{"c": 0.2}"#);
    let resolved = json(&out.join("resolved_config.json"));
    assert_eq!(resolved["c"], 0.2);
    assert_eq!(resolved["nonlinearity"]["eta"], 0.3);
    assert_eq!(resolved["lagrangian"]["exponent"], 2.0);
    assert_eq!(resolved["output"], out.to_str().unwrap());
    assert_eq!(resolved["cooperate"]["divisor"], 8.0);
}
