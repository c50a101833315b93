//! End-to-end checks of the command-line surface: exit codes, schema
//! validation, artifact determinism, and the certify-from-trajectory path.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sgld-lab"))
}

fn write_config(dir: &Path, contents: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, contents).unwrap();
    path
}

const BASE_CONFIG: &str = r#"{
  "problem": { "kind": "double_well_1d", "n": 16, "d": 1, "seed": 7 },
  "algorithm": {
    "beta": 2.0, "lambda": 0.1, "sigma0": 1.0,
    "grad_mode": "single", "steps": 40, "seed": 11
  },
  "schedule": { "kind": "constant", "c": 0.02 },
  "certificate": { "delta": 0.05, "replicas": 8, "conservative": false },
  "experiment": { "replicas": 8, "test_n": 32, "test_seed": 9 }
}"#;

#[test]
fn run_then_certify_from_trajectory_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), BASE_CONFIG);

    let out1 = dir.path().join("a");
    let status = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out1)
        .status()
        .unwrap();
    assert!(status.success());
    let traj1 = std::fs::read_to_string(out1.join("trajectory.csv")).unwrap();
    assert!(traj1.starts_with("k,eta,grad_sq_norm,sampled_index\n"));
    assert!(out1.join("manifest.json").exists());
    assert!(out1.join("dataset.csv").exists());

    // rerun reproduces the trajectory byte for byte
    let out2 = dir.path().join("b");
    bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out2)
        .status()
        .unwrap();
    let traj2 = std::fs::read_to_string(out2.join("trajectory.csv")).unwrap();
    assert_eq!(traj1, traj2);

    // certify from the stored trajectory, twice; certificates must agree
    let cert_out1 = dir.path().join("c1");
    let cert_out2 = dir.path().join("c2");
    for out in [&cert_out1, &cert_out2] {
        let status = bin()
            .args(["certify", "--config"])
            .arg(&config)
            .arg("--trajectory")
            .arg(out1.join("trajectory.csv"))
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    for name in [
        "certificate_pac_bayes.json",
        "certificate_sgld_improved.json",
        "certificates.json",
        "per_step_table.csv",
    ] {
        let a = std::fs::read_to_string(cert_out1.join(name)).unwrap();
        let b = std::fs::read_to_string(cert_out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
}

#[test]
fn conservative_certify_needs_fresh_runs() {
    let dir = tempfile::tempdir().unwrap();
    let conservative = BASE_CONFIG.replace("\"conservative\": false", "\"conservative\": true");
    let config = write_config(dir.path(), &conservative);
    let run_out = dir.path().join("run");
    bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&run_out)
        .status()
        .unwrap();

    // from a stored trajectory there are no standard errors: exit 1
    let output = bin()
        .args(["certify", "--config"])
        .arg(&config)
        .arg("--trajectory")
        .arg(run_out.join("trajectory.csv"))
        .arg("--out")
        .arg(dir.path().join("c"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("conservative"));

    // fresh replicated runs supply them: success
    let status = bin()
        .args(["certify", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("c2"))
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn lab_nonexpansive_reports_all_pass() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{
          "problem": null,
          "lab": {
            "check": "nonexpansive",
            "setup": {
              "seed": 5, "grid_points": 512, "steps": 5, "eta": 0.05,
              "beta": 2.0, "lambda": 0.0, "sigma0": 1.0, "n": 10,
              "slack": 1e-6, "slack_final": 1e-3, "pairs": 4,
              "drift_bound": 1.0, "total_time": 0.25
            }
          }
        }"#,
    );
    let out = dir.path().join("lab");
    let output = bin()
        .args(["lab", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let csv = std::fs::read_to_string(out.join("lab_nonexpansive.csv")).unwrap();
    assert!(csv.starts_with("step,measured,cap,slack,pass\n"));
    for line in csv.lines().skip(1) {
        assert!(line.ends_with("true"), "row failed: {line}");
    }
}

#[test]
fn eta_lambda_assumption_violation_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{
          "problem": { "kind": "double_well_1d", "n": 16, "d": 1, "seed": 7 },
          "algorithm": {
            "beta": 2.0, "lambda": 30.0, "sigma0": 1.0,
            "grad_mode": "single", "steps": 10, "seed": 11
          },
          "schedule": { "kind": "constant", "c": 0.02 }
        }"#,
    );
    let output = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("0.5") && stderr.contains("eta"),
        "error should cite the violated step-size assumption, got: {stderr}"
    );
}

#[test]
fn unknown_config_key_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{
          "problem": { "kind": "double_well_1d", "n": 16, "d": 1, "seed": 7, "bogus_knob": 3 },
          "algorithm": {
            "beta": 2.0, "lambda": 0.0, "sigma0": 1.0,
            "grad_mode": "single", "steps": 10, "seed": 11
          },
          "schedule": { "kind": "constant", "c": 0.02 }
        }"#,
    );
    let output = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("bogus_knob"),
        "should name the offending field: {stderr}"
    );
}

#[test]
fn missing_config_file_exits_1() {
    let output = bin()
        .args([
            "run",
            "--config",
            "/nonexistent/nope.json",
            "--out",
            "/tmp/never",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn experiment_reports_gap_and_probe() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), BASE_CONFIG);
    let out = dir.path().join("exp");
    let output = bin()
        .args(["experiment", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .arg("--jobs")
        .arg("2")
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("experiment.json")).unwrap())
            .unwrap();
    assert!(report["gap"]["mean_gap"].is_number());
    assert!(report["stability_probe"].is_number());
}

#[test]
fn seed_flag_overrides_algorithm_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), BASE_CONFIG);
    let out1 = dir.path().join("s1");
    let out2 = dir.path().join("s2");
    for (out, seed) in [(&out1, "11"), (&out2, "999")] {
        bin()
            .args(["run", "--config"])
            .arg(&config)
            .args(["--seed", seed, "--out"])
            .arg(out)
            .status()
            .unwrap();
    }
    let a = std::fs::read_to_string(out1.join("trajectory.csv")).unwrap();
    let b = std::fs::read_to_string(out2.join("trajectory.csv")).unwrap();
    assert_ne!(a, b, "different seeds must change the trajectory");
}
