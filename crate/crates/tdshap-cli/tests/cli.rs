//! End-to-end checks of the installed binary: JSON in, JSON and CSV out.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tdshap"))
}

fn write_line_csv(dir: &Path, rows: usize) -> PathBuf {
    let mut text = String::from("x,y\n");
    for i in 0..rows {
        text.push_str(&format!("{}.0,{}.0\n", i, i));
    }
    let path = dir.join("line.csv");
    std::fs::write(&path, text).unwrap();
    path
}

fn write_config(dir: &Path, csv: &Path, method: &str, output: Option<&Path>) -> PathBuf {
    let output_field = match output {
        Some(p) => format!(r#""output_dir": {},"#, serde_json::to_string(p).unwrap()),
        None => String::new(),
    };
    let text = format!(
        r#"{{
            "dataset": {{"csv": {csv}, "label": "y", "task": "regression"}},
            "split": {{"train": 8, "val": 6, "test": 6}},
            "learner": {{"kind": "knn", "k": 1}},
            "metric": "neg_mae",
            "method": {method},
            "removal_grid_step": 1,
            {output_field}
            "seeds": [0, 1]
        }}"#,
        csv = serde_json::to_string(csv).unwrap(),
    );
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn run_ok(cmd: &mut Command) -> serde_json::Value {
    let Output {
        status,
        stdout,
        stderr,
    } = cmd.output().unwrap();
    assert!(
        status.success(),
        "exit {status:?}\nstderr: {}",
        String::from_utf8_lossy(&stderr)
    );
    serde_json::from_slice(&stdout).expect("stdout is a JSON document")
}

#[test]
fn cleanse_writes_report_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_line_csv(dir.path(), 20);
    let out = dir.path().join("out");
    let config = write_config(dir.path(), &csv, r#""exact""#, Some(&out));

    let report = run_ok(bin().args(["cleanse", "--config"]).arg(&config));
    assert_eq!(report["method"], "exact");
    assert_eq!(report["aggregate"]["seeds_completed"], 2);
    assert_eq!(report["seeds"].as_array().unwrap().len(), 2);

    let on_disk: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(on_disk["method"], "exact");
    for seed in [0, 1] {
        let curve = std::fs::read_to_string(out.join(format!("curve_seed{seed}.csv"))).unwrap();
        assert!(curve.starts_with("n_remove,val_V,test_V\n"));
        // grid step 1 over 8 training instances: removals 0..=7
        assert_eq!(curve.lines().count(), 9);
        let valuation =
            std::fs::read_to_string(out.join(format!("valuation_seed{seed}.csv"))).unwrap();
        assert!(valuation.starts_with("instance_id,phi,method\n"));
        assert_eq!(valuation.lines().count(), 9);
    }
}

#[test]
fn value_emits_scores_without_curves() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_line_csv(dir.path(), 20);
    let out = dir.path().join("out");
    let config = write_config(
        dir.path(),
        &csv,
        r#"{"tdshap": {"stop": {"iterations": 5}, "batch_k": 2}}"#,
        None,
    );

    let report = run_ok(
        bin()
            .args(["value", "--config"])
            .arg(&config)
            .arg("--output-dir")
            .arg(&out),
    );
    assert_eq!(report["method"], "tdshap");
    let rows = report["seeds"][0]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 8);
    assert!(out.join("valuation_seed0.csv").exists());
    assert!(out.join("audit_seed0.jsonl").exists());
    assert!(!out.join("curve_seed0.csv").exists());
    assert!(
        !out.join("report.json").exists() || {
            // value mode writes its own report without curves
            let v: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap())
                    .unwrap();
            v["seeds"][0].get("curve").is_none()
        }
    );
}

#[test]
fn oracle_overrides_the_configured_method() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_line_csv(dir.path(), 20);
    let config = write_config(dir.path(), &csv, r#""random""#, None);

    let report = run_ok(bin().args(["oracle", "--config"]).arg(&config));
    assert_eq!(report["method"], "exact");
    let rows = report["seeds"][0]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 8);
    for row in rows {
        assert_eq!(row["method"], "exact");
        assert!(row["phi"].is_number());
    }
}

#[test]
fn theory_prints_the_frozen_bound() {
    let report = run_ok(bin().args([
        "theory",
        "--n",
        "5",
        "--epsilon",
        "0.1",
        "--metric",
        "neg_mae",
        "--label-lo",
        "0",
        "--label-hi",
        "0.5",
    ]));
    assert_eq!(report["t_sufficient"], 133_082);
    assert_eq!(report["w_bound"], 1.0);
    assert_eq!(report["log_base"], "natural");
}

#[test]
fn simulate_bandit_reports_the_failure_rate() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.json");
    std::fs::write(
        &scenario,
        r#"{
            "arms": [
                {"kind": "uniform", "lo": 0.3, "hi": 0.9},
                {"kind": "uniform", "lo": -0.9, "hi": -0.3},
                {"kind": "bernoulli_shifted", "p": 0.8, "lo": -1.0, "hi": 1.0}
            ],
            "tau": 0.0,
            "epsilon": 0.3,
            "t": 600,
            "trials": 200,
            "seed": 7
        }"#,
    )
    .unwrap();

    let outcome = run_ok(bin().args(["simulate-bandit", "--config"]).arg(&scenario));
    assert_eq!(outcome["trials"], 200);
    let rate = outcome["failure_rate"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&rate));
    assert!(outcome["bound"].as_f64().unwrap() > 0.0);
}

#[test]
fn missing_config_fails_loudly() {
    let output = bin()
        .args(["cleanse", "--config", "/nonexistent/config.json"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("config"), "stderr: {stderr}");
}

#[test]
fn malformed_config_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, "{ not json").unwrap();
    let output = bin()
        .args(["cleanse", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("bad.json"));
}

#[test]
fn thread_cap_is_honored_and_zero_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_line_csv(dir.path(), 20);
    let config = write_config(dir.path(), &csv, r#""random""#, None);

    let report = run_ok(
        bin()
            .env("TDSHAP_THREADS", "1")
            .args(["cleanse", "--config"])
            .arg(&config),
    );
    assert_eq!(report["aggregate"]["seeds_completed"], 2);

    let output = bin()
        .env("TDSHAP_THREADS", "0")
        .args([
            "theory",
            "--n",
            "1",
            "--epsilon",
            "1",
            "--metric",
            "accuracy",
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("TDSHAP_THREADS"));
}
