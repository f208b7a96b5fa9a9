use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn creditrd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_creditrd"))
        .args(args)
        .output()
        .unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    let cfg = serde_json::json!({
        "out_dir": dir.join("out"),
        "world": { "n_czs": 10, "seed": 11 },
    });
    fs::write(&path, cfg.to_string()).unwrap();
    path.to_string_lossy().into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn full_run_exits_cleanly_and_writes_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = creditrd(&["--config", &cfg, "--workers", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let out_dir = dir.path().join("out");
    for stage in ["simulate", "scan", "shares", "estimate", "report"] {
        assert!(
            out_dir.join(format!("manifest_{stage}.json")).is_file(),
            "{stage}"
        );
    }
    let thresholds = fs::read_to_string(out_dir.join("thresholds.csv")).unwrap();
    assert!(thresholds.starts_with("cz,year,"), "{thresholds}");
    let shares = fs::read_to_string(out_dir.join("shares.csv")).unwrap();
    assert!(shares.lines().count() > 1);
    let report = fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert!(report.contains("Observations"));
}

#[test]
fn year_flag_reaches_estimation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = creditrd(&["--config", &cfg, "--years", "2012,2014,2016"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let est: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/estimates.json")).unwrap())
            .unwrap();
    let estimates = est["estimates"].as_array().unwrap();
    assert!(!estimates.is_empty());
    assert!(estimates.iter().all(|e| e["n_years"] == 3));
}

#[test]
fn unknown_stage_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = creditrd(&["--config", &cfg, "--stage", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bogus"));
}

#[test]
fn invalid_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    assert_eq!(
        creditrd(&["--config", &cfg, "--bandwidth", "17"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        creditrd(&["--config", &cfg, "--workers", "0"])
            .status
            .code(),
        Some(2)
    );
    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{ not json").unwrap();
    assert_eq!(
        creditrd(&["--config", broken.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn missing_predecessor_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = creditrd(&["--config", &cfg, "--stage", "estimate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("shares"), "{}", stderr(&out));
}

#[test]
fn schema_violation_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    assert_eq!(
        creditrd(&["--config", &cfg, "--stage", "simulate"])
            .status
            .code(),
        Some(0)
    );
    let panel = dir.path().join("out/credit_panel.csv");
    let text = fs::read_to_string(&panel)
        .unwrap()
        .replacen("credit_score", "fico", 1);
    fs::write(&panel, text).unwrap();
    let out = creditrd(&["--config", &cfg, "--stage", "scan"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("credit_score"), "{}", stderr(&out));
}
