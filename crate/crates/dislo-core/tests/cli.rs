//! End-to-end checks of the `dislo` binary: exit codes and artifacts.

use std::process::Command;

fn dislo() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dislo"))
}

#[test]
fn kernel_check_runs_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 1\n").unwrap();
    let out = dir.path().join("out");
    let status = dislo()
        .args(["kernel-check", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for name in ["results.json", "table.csv", "log.txt"] {
        assert!(out.join(name).exists(), "missing artifact {name}");
    }
}

#[test]
fn unknown_experiment_exits_2_with_usage() {
    let output = dislo().args(["frobnicate", "--config", "x.toml"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("possible values"), "no usage text: {stderr}");
}

#[test]
fn malformed_config_fails_with_line_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "seed = [not, toml\n").unwrap();
    let output = dislo()
        .args(["kernel-check", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line"), "no location diagnostic: {stderr}");
}

#[test]
fn failing_verdict_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    // An impossible tolerance forces a FAIL verdict.
    std::fs::write(&cfg, "[kernel_check]\npartition_tol = -1.0\n").unwrap();
    let status = dislo()
        .args(["kernel-check", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}
