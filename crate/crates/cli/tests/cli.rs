use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn eoc_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eoc-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let out = eoc_lab(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn csv_rows(args: &[&str]) -> (Vec<String>, Vec<Vec<String>>) {
    let out = eoc_lab(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_reader(out.stdout.as_slice());
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("eoc-lab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn solve_reports_clip_width_and_threshold() {
    let v = json(&["solve", "--activation", "crelu", "-s", "0.85", "--qstar", "3", "--vprime", "0.7"]);
    assert_eq!(v["schema_version"], 1);
    assert!((v["init"]["m"].as_f64().unwrap() - 2.03).abs() <= 0.01);
    assert!((v["diagnostics"]["v_prime"].as_f64().unwrap() - 0.7).abs() < 1e-9);

    let v = json(&["solve", "--activation", "crelu", "-s", "0.5", "--qstar", "1", "--vprime", "0.7"]);
    assert_eq!(v["init"]["tau"].as_f64().unwrap(), 0.0);
}

#[test]
fn cst_with_borrowed_clip_width() {
    let v = json(&["solve", "--activation", "cst", "-s", "0.85", "--qstar", "1", "--vprime", "0.9", "--m-from", "crelu"]);
    assert!((v["init"]["m"].as_f64().unwrap() - 1.74).abs() <= 0.01);
    assert!((v["diagnostics"]["v_prime2"].as_f64().unwrap() - 1.05).abs() <= 0.01);
}

#[test]
fn exit_codes() {
    let out = eoc_lab(&["solve", "--vprime", "0.000001"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "infeasible");

    assert_eq!(eoc_lab(&["solve", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(eoc_lab(&["nlo", "--depth", "0"]).status.code(), Some(1));
    assert_eq!(eoc_lab(&["--help"]).status.code(), Some(0));

    let out = eoc_lab(&["train", "--activation", "relu", "--depth", "3", "--width", "8", "--epochs", "2", "--lr", "1e200"]);
    assert_eq!(out.status.code(), Some(3));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["runs"][0]["diverged"], true);
}

#[test]
fn curvature_sweep_changes_sign() {
    let (header, rows) = csv_rows(&[
        "sweep", "--quantity", "Vprimeprime", "-s", "0.85", "--qstar-range", "0.5,3,6", "--m-range", "0.5,3,6",
    ]);
    assert_eq!(header, ["quantity", "s", "q_star", "m", "q", "value"]);
    assert_eq!(rows.len(), 36);
    let values: Vec<f64> = rows.iter().map(|r| r[5].parse().unwrap()).collect();
    assert!(values.iter().any(|&v| v > 0.0) && values.iter().any(|&v| v < 0.0));
}

#[test]
fn chi1_prime_falls_with_q_star() {
    let c: Vec<f64> = ["1", "2", "3"]
        .iter()
        .map(|q| json(&["solve", "-s", "0.85", "--qstar", q, "--vprime", "0.7"])["diagnostics"]["chi1_prime"].as_f64().unwrap())
        .collect();
    assert!(c[0] > c[1] && c[1] > c[2], "{c:?}");
}

#[test]
fn variance_curves_cross_the_diagonal() {
    let (_, rows) = csv_rows(&[
        "sweep", "--quantity", "vmap_curve", "-s", "0.85", "--qstar", "1", "--m-range", "1.2,2.0,5", "--q-range",
        "0.03,5,300",
    ]);
    assert_eq!(rows.len(), 5 * 300);
    let crossings = |m: f64| -> Vec<f64> {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| (r[3].parse::<f64>().unwrap() - m).abs() < 1e-9)
            .map(|r| {
                let q: f64 = r[4].parse().unwrap();
                (q, r[5].parse::<f64>().unwrap() - q)
            })
            .collect();
        pts.windows(2)
            .filter(|w| (w[0].1 > 0.0) != (w[1].1 > 0.0))
            .map(|w| w[1].0)
            .collect()
    };
    assert_eq!(crossings(1.2).len(), 1);
    let c = crossings(2.0);
    assert_eq!(c.len(), 3, "{c:?}");
    assert!((c[0] - 1.0).abs() < 0.05 && (c[2] - 3.5).abs() < 0.3);
}

#[test]
fn nlo_has_one_row_per_layer() {
    let (header, rows) = csv_rows(&["nlo", "--depth", "50"]);
    assert_eq!(header, ["layer", "q", "r", "q1"]);
    assert_eq!(rows.len(), 50);
}

#[test]
fn simulate_is_reproducible() {
    let args = ["simulate", "--seed", "7", "--depth", "5", "--width", "64", "--batch", "8", "--trials", "2", "--backward"];
    let (a, b) = (eoc_lab(&args), eoc_lab(&args));
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let (header, rows) = csv_rows(&args);
    assert_eq!(header, ["trial", "layer", "q_hat", "sparsity_hat", "chi1_hat", "v_hat"]);
    assert_eq!(rows.len(), 10);
}

#[test]
fn train_on_two_blobs() {
    let log = tmp("log.csv");
    let v = json(&[
        "train", "--dataset", "synthetic-blobs", "--classes", "2", "--depth", "2", "--width", "8", "--epochs", "50", "--lr",
        "0.05", "--batch", "32", "-s", "0.5", "--log", log.to_str().unwrap(),
    ]);
    assert!(v["runs"][0]["test_accuracy"].as_f64().unwrap() >= 0.95);
    let mut reader = csv::Reader::from_path(&log).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["seed", "epoch", "step", "loss", "val_acc", "sparsity"]);
    assert_eq!(reader.records().count(), 50);
}

#[test]
fn config_file_replaces_flags() {
    let path = tmp("solve.json");
    std::fs::write(&path, r#"{"activation": "crelu", "sparsity": 0.9, "qstar": 2, "vprime": 0.7}"#).unwrap();
    let v = json(&["solve", "--config", path.to_str().unwrap()]);
    assert!((v["init"]["m"].as_f64().unwrap() - 1.50).abs() <= 0.01);

    assert_eq!(eoc_lab(&["solve", "--config", path.to_str().unwrap(), "-s", "0.6"]).status.code(), Some(1));
    std::fs::write(&path, r#"{"sparsity": 0.9, "typo": 1}"#).unwrap();
    assert_eq!(eoc_lab(&["solve", "--config", path.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn output_file_and_thread_cap() {
    let path = tmp("fp.json");
    let status = Command::new(env!("CARGO_BIN_EXE_eoc-lab"))
        .args(["fixed-points", "-s", "0.85", "--m", "2.0", "--out", path.to_str().unwrap()])
        .env("EOC_LAB_THREADS", "1")
        .status()
        .unwrap();
    assert!(status.success());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["fixed_points"]["points"].as_array().unwrap().len(), 3);

    let out = Command::new(env!("CARGO_BIN_EXE_eoc-lab"))
        .args(["nlo"])
        .env("EOC_LAB_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn jacobian_reports_theory_and_samples() {
    let v = json(&["jacobian", "--activation", "relu", "--depth", "4", "--width", "64", "--trials", "2"]);
    assert_eq!(v["moments"]["sigma_jjt"].as_f64().unwrap(), 8.0);
    assert!(v["empirical"]["m1"].as_f64().unwrap() > 0.0);
    let v = json(&["jacobian", "--depth", "4"]);
    assert!(v["empirical"].is_null());
    assert!((v["moments"]["m1"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}
