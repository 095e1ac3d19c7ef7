use std::path::Path;
use std::process::{Command, Output};

fn autoiad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autoiad")).args(args).env("RUST_LOG", "error").output().unwrap()
}

fn transcript(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("transcripts").join(name).display().to_string()
}

#[test]
fn synth_then_run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let runs = dir.path().join("runs");
    let out = autoiad(&["synth", "--category", "synthtile", "--n-train", "12", "--out", data.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(data.join("synthtile/train/good").is_dir());

    let out = autoiad(&[
        "run",
        "--category",
        "synthtile",
        "--data",
        data.to_str().unwrap(),
        "--transcripts",
        &transcript("happy.json"),
        "--out",
        runs.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().nth(1).unwrap().starts_with("synthtile,4/4"), "{stdout}");

    let reports = runs.join("reports.json");
    assert!(reports.is_file());
    let out = autoiad(&["report", reports.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("| synthtile |"));
}

#[test]
fn fixtures_check_exits_zero() {
    let out = autoiad(&["fixtures-check"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn bad_invocations_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = autoiad(&["suite", "--transcripts", &transcript("happy.json"), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no tasks"));

    let out = autoiad(&["run", "--category", "x", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--transcripts"));

    let out = autoiad(&["report", "--fixture", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}
