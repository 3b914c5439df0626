//! End-to-end checks of the `ik-exp` command surface.

use std::path::Path;
use std::process::{Command, Output};

fn ik_exp(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ik-exp"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

#[test]
fn list_names_the_builtin_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let out = ik_exp(&["list"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for id in ["3r-lockup", "iiwa-xz", "iiwa-general"] {
        assert!(text.contains(id), "missing {id} in {text}");
    }
}

#[test]
fn export_then_verify_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["planar3r", "iiwa14"] {
        let file = format!("{name}.model");
        let out = ik_exp(&["export-model", name, "--out", &file], dir.path());
        assert!(out.status.success(), "{:?}", out);
        let out = ik_exp(&["verify", &file], dir.path());
        assert!(out.status.success(), "{:?}", out);
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("all"));
        assert!(!text.contains("FAIL"));
    }
}

#[test]
fn export_to_stdout_parses() {
    let dir = tempfile::tempdir().unwrap();
    let out = ik_exp(&["export-model", "planar3r"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("name planar3r"));
}

#[test]
fn verify_rejects_corrupted_singular_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = ik_exp(
        &["export-model", "planar3r", "--out", "m.model"],
        dir.path(),
    );
    assert!(out.status.success());
    let path = dir.path().join("m.model");
    // replace the singular configuration with a regular one
    let text = std::fs::read_to_string(&path).unwrap();
    let broken = text.replace(
        "q 0.0000000000000000e0 0.0000000000000000e0 0.0000000000000000e0",
        "q 0.0000000000000000e0 3.0000000000000000e-1 4.0000000000000000e-1",
    );
    assert_ne!(text, broken);
    std::fs::write(&path, broken).unwrap();
    let out = ik_exp(&["verify", "m.model"], dir.path());
    assert!(!out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("FAIL"), "{stdout}");
}

#[test]
fn verify_rejects_unparsable_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.model"), "name x\njoints zero\n").unwrap();
    let out = ik_exp(&["verify", "bad.model"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn run_unknown_scenario_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = ik_exp(&["run", "no-such-scenario"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn run_writes_traces_and_exits_zero_despite_lockups() {
    let dir = tempfile::tempdir().unwrap();
    let out = ik_exp(
        &[
            "run",
            "3r-lockup",
            "--iters",
            "3",
            "--seeds-count",
            "2",
            "--out",
            "traces",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{:?}", out);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("locked-up"), "{stdout}");
    let traces = dir.path().join("traces").join("3r-lockup_traces.csv");
    let summary = dir.path().join("traces").join("summary.csv");
    assert!(traces.exists());
    assert!(summary.exists());
    let summary_text = std::fs::read_to_string(summary).unwrap();
    assert!(
        summary_text.contains("dpi-singular,,locked-up"),
        "{summary_text}"
    );
}

#[test]
fn run_accepts_the_documented_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = ik_exp(
        &[
            "run",
            "3r-lockup",
            "--iters",
            "2",
            "--seeds-count",
            "1",
            "--lambda-sq",
            "1e-6",
            "--epsilon",
            "2e-3",
            "--seed",
            "9",
            "--error-mode",
            "first-order",
            "--prolonged-jacobian",
            "--out",
            "t2",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{:?}", out);
}
