use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn hzeta(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hzeta")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, file: &str, body: &str) -> PathBuf {
    let path = dir.join(file);
    std::fs::write(&path, body).unwrap();
    path
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_reports_bad_primes() {
    let dir = TempDir::new().unwrap();
    let good = write_config(dir.path(), "good.toml", "name = \"axes\"\nforms = [[1, 0], [0, 1]]\n");
    let out = hzeta(&["validate", s(&good)]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["r"], 2);
    assert_eq!(v["bad_primes"], serde_json::json!([]));

    let bad = write_config(dir.path(), "bad.json", r#"{"name": "b", "forms": [[1, 0], [1, 2]]}"#);
    let v = json(&hzeta(&["validate", s(&bad)]));
    assert_eq!(v["bad_primes"], serde_json::json!([2]));
}

#[test]
fn validate_rejects_non_coprime_form() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "nc.toml", "name = \"nc\"\nforms = [[2, 0]]\n");
    let out = hzeta(&["validate", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("coprime"));
}

#[test]
fn count_rows_and_shard_determinism() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "one.toml", "name = \"one\"\nforms = [[1, 0]]\n");
    let out = hzeta(&["count", s(&cfg), "--bmax", "1"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout), "B,N\n1,1\n");

    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert!(hzeta(&["count", s(&cfg), "--grid", "10,100,1000", "--shards", "1", "--out", s(&a)]).status.success());
    assert!(hzeta(&["count", s(&cfg), "--grid", "10,100,1000", "--shards", "8", "--out", s(&b)]).status.success());
    let ta = std::fs::read(&a).unwrap();
    assert_eq!(ta, std::fs::read(&b).unwrap());
    let text = String::from_utf8(ta).unwrap();
    let counts: Vec<u64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(counts.len(), 3);
    assert!(counts.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn fourier_verdicts() {
    let dir = TempDir::new().unwrap();
    let good = write_config(dir.path(), "good.toml", "name = \"axes\"\nforms = [[1, 0], [0, 1]]\n");
    let out = hzeta(&["fourier", s(&good), "--p", "3", "--s", "4,3,3"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["verdict"], "PASS");
    assert!(v["difference"].as_f64().unwrap() <= v["tail_bound"].as_f64().unwrap());

    let bad = write_config(dir.path(), "bad.toml", "name = \"b\"\nforms = [[1, 0], [1, 2]]\n");
    let out = hzeta(&["fourier", s(&bad), "--p", "2", "--char", "0,1", "--s", "5,3,3", "--alpha-max", "6"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["closed"], "n/a");
    assert!(v["oracle"].is_string());

    let out = hzeta(&["fourier", s(&good), "--p", "5", "--s", "2,2,2"]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("precondition"));
}

#[test]
fn height_of_a_point() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "one.toml", "name = \"one\"\nforms = [[1, 0]]\n");
    let out = hzeta(&["height", s(&cfg), "--point", "1/2,-3", "--s", "3,2"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["point"], serde_json::json!(["1", "-6", "2"]));
    // H_0 H_1 = H_O(1) = sqrt(1 + 36 + 4)
    let h0 = v["heights"][0]["value"].as_f64().unwrap();
    let h1 = v["heights"][1]["value"].as_f64().unwrap();
    assert!((h0 * h1 - 41f64.sqrt()).abs() < 1e-9);
}

#[test]
fn constant_and_fit() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "one.toml", "name = \"one\"\nforms = [[1, 0]]\n");
    let out = hzeta(&["constant", s(&cfg), "--p-max", "10000"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["alpha"], "1/6");
    let c = v["predicted_leading_coeff"]["value"].as_f64().unwrap();
    let err = v["predicted_leading_coeff"]["err"].as_f64().unwrap();
    assert!((c - 6.0 / std::f64::consts::PI.powi(2)).abs() <= err);

    let csv = dir.path().join("series.csv");
    assert!(hzeta(&["count", s(&cfg), "--grid", "10,40,160,640,2560,10240,40960", "--out", s(&csv)]).status.success());
    let out = hzeta(&["fit", s(&cfg), "--csv", s(&csv)]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["coefficients"].as_array().unwrap().len(), 2);
    assert_eq!(v["stability_trace"].as_array().unwrap().len(), 3);

    let narrow = dir.path().join("narrow.csv");
    std::fs::write(&narrow, "B,N\n10,21\n20,30\n40,60\n80,100\n").unwrap();
    assert_eq!(hzeta(&["fit", s(&cfg), "--csv", s(&narrow)]).status.code(), Some(2));
}

#[test]
fn output_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "one.toml", "name = \"one\"\nforms = [[1, 0]]\n");
    let a = hzeta(&["constant", s(&cfg), "--p-max", "1000"]);
    let b = hzeta(&["constant", s(&cfg), "--p-max", "1000"]);
    assert_eq!(a.stdout, b.stdout);
}
