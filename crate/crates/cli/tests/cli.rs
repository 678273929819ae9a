use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kar")).args(args).output().expect("kar runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn results(dir: &Path) -> Vec<(String, String, String, f64)> {
    let text = fs::read_to_string(dir.join("results.csv")).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].into(), f[1].into(), f[2].into(), f[3].parse().unwrap())
        })
        .collect()
}

#[test]
fn generate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = kar(&["generate", "--design", "main", "--seed", "5", "--out", path(dir)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let da = fs::read_to_string(a.join("data.csv")).unwrap();
    assert_eq!(da, fs::read_to_string(b.join("data.csv")).unwrap());
    assert_eq!(da.lines().count(), 701);
    assert_eq!(da.lines().next().unwrap(), "x,y,z");
    assert!(a.join("manifest.json").exists());
}

#[test]
fn kreg_matches_kar_at_gamma_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = kar(&[
        "benchmark", "--methods", "kreg,kar", "--gamma", "1", "--trials", "1", "--out", path(tmp.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = results(tmp.path());
    let mse = |m: &str| rows.iter().find(|r| r.0 == m && r.2 == "mse").unwrap().3;
    let (kreg, kar) = (mse("KReg"), mse("KAR"));
    assert!((kreg - kar).abs() <= 1e-10 * kreg.abs(), "KReg {kreg} vs KAR {kar}");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert!(summary["summary"]["KAR"]["median"].is_number());
}

#[test]
fn identifiability_case_one_has_zero_bias() {
    let tmp = tempfile::tempdir().unwrap();
    let out = kar(&["identifiability", "--case", "thm3-i", "--replicates", "3", "--out", path(tmp.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("pass") && !stdout.contains("FAIL"), "{stdout}");
    let rows = results(tmp.path());
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.0 == "thm3-i" && r.3 < 1e-10));
}

#[test]
fn identifiability_reports_the_non_identified_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let out = kar(&["identifiability", "--case", "appendix-iv", "--replicates", "2", "--out", path(tmp.path())]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("not identified (expected)"));
}

#[test]
fn malformed_spec_reports_location() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("bad.json");
    fs::write(&spec, "{\n  \"b_cz\": [[1.0, 2.0]],\n  \"b_xz\": [[1.0,, 2.0]]\n}\n").unwrap();
    let out = kar(&["identifiability", "--spec", path(&spec), "--out", path(&tmp.path().join("o"))]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 3"), "{stderr}");
}

#[test]
fn bad_splits_are_rejected() {
    let out = kar(&["benchmark", "--splits", "10,20", "--out", "/nonexistent/never"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("three sizes"));
}

#[test]
fn replay_is_bitwise_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (first, second) = (tmp.path().join("first"), tmp.path().join("second"));
    let out = kar(&[
        "benchmark", "--methods", "KAR,KReg,OLS", "--splits", "60,60,60", "--trials", "3", "--seed", "11",
        "--jobs", "2", "--out", path(&first),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = kar(&["replay", "--manifest", path(&first.join("manifest.json")), "--out", path(&second)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["results.csv", "summary.json"] {
        assert_eq!(fs::read(first.join(file)).unwrap(), fs::read(second.join(file)).unwrap(), "{file}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(second.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "benchmark");
    assert_eq!(manifest["seed"], 11);
}
