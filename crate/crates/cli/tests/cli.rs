use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_latticediff"));
    c.env_remove("LATTICEDIFF_THREADS");
    c
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

#[test]
fn validate_accepts_reference_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("ref1d.json");
    let out = run_in(dir.path(), &["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["checks"].as_array().is_some_and(|c| !c.is_empty()));
}

#[test]
fn validate_rejects_disconnected_levels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("w_identity.json");
    let out = run_in(dir.path(), &["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"]["kind"], "invalid_model");
    let failures = err["error"]["failures"].as_array().unwrap();
    assert!(failures
        .iter()
        .any(|f| f.as_str().unwrap().starts_with("fgr_connected")));
}

#[test]
fn missing_config_and_bad_usage_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["validate", "--config", "does-not-exist.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "io");

    let out = run_in(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "usage");

    let out = run_in(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn diagram_precondition_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["diagrams", "--check-bounds", "--k", "2*exp(-t)"],
    );
    assert_ne!(out.status.code(), Some(0));
    assert_eq!(stderr_json(&out)["error"]["kind"], "precondition");
}

#[test]
fn diffusion_writes_all_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("ref1d.json");
    let out = run_in(
        dir.path(),
        &[
            "diffusion",
            "--config",
            cfg.to_str().unwrap(),
            "--kmc-traj",
            "300",
            "--out",
            "D.json",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let d: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("D.json")).unwrap()).unwrap();
    let hess = d["hessian"]["d"][0][0].as_f64().unwrap();
    let formula = d["formula"]["d"][0][0].as_f64().unwrap();
    assert!(
        ((hess - formula) / formula).abs() < 1e-4,
        "{hess} vs {formula}"
    );
    assert!(d["kmc"]["d"][0][0].as_f64().unwrap() > 0.0);
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("D.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["id"], d["manifest"]);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 1);
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let cfg = config("ref1d.json");
    let cfg = cfg.to_str().unwrap();
    let mut files = Vec::new();
    let mut dirs = Vec::new();
    for threads in ["1", "3"] {
        let dir = tempfile::tempdir().unwrap();
        let out = run_in(
            dir.path(),
            &[
                "--threads",
                threads,
                "simulate",
                "--config",
                cfg,
                "--traj",
                "400",
                "--tfinal",
                "20",
                "--probe",
                "0.4",
                "--checkpoint",
                "10",
                "--out",
                "sim.json",
                "--dump-paths",
                "paths.csv",
                "--paths-traj",
                "2",
                "--paths-events",
                "20",
            ],
        );
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        files.push((
            std::fs::read(dir.path().join("sim.json")).unwrap(),
            std::fs::read(dir.path().join("paths.csv")).unwrap(),
        ));
        dirs.push(dir);
    }
    assert_eq!(files[0], files[1]);
    let paths = String::from_utf8(files[0].1.clone()).unwrap();
    assert!(paths.starts_with("# manifest "));
}

#[test]
fn diagrams_list_prints_every_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["diagrams", "--list", "--n", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    // (2n-1)!! pairings of 6 points
    assert_eq!(lines.len(), 15);
    assert_eq!(
        lines
            .iter()
            .filter(|l| l.ends_with(" minimally_irreducible"))
            .count(),
        1
    );
}

#[test]
fn spectrum_csv_has_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("ref1d.json");
    let out = run_in(
        dir.path(),
        &[
            "spectrum",
            "--config",
            cfg.to_str().unwrap(),
            "--steps",
            "2",
            "--no-gap",
            "--out",
            "f.csv",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(dir.path().join("f.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# manifest "));
    assert!(lines[1].starts_with("p,re_f,im_f"));
    assert_eq!(lines.len(), 2 + 3);
}
