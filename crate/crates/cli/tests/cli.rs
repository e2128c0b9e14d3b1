//! End-to-end tests of the binary: exit codes, file output, determinism,
//! and flag-over-file override behavior.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bundlemech(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bundlemech"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bundlemech-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn check_passes_and_prints_a_report() {
    let out = bundlemech(&[
        "check",
        "--model",
        "abelian_disk",
        "--samples",
        "5",
        "--seed",
        "3",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["model"], "abelian_disk");
    assert_eq!(report["pass"], true);
    assert!(report["entries"].as_array().unwrap().len() > 20);
}

#[test]
fn usage_and_config_errors_exit_1() {
    // Unknown flag.
    let out = bundlemech(&["simulate", "--nonsense"]);
    assert_eq!(out.status.code(), Some(1));
    // Missing model.
    let out = bundlemech(&["simulate"]);
    assert_eq!(out.status.code(), Some(1));
    // Unknown model.
    let out = bundlemech(&["simulate", "--model", "pendulum"]);
    assert_eq!(out.status.code(), Some(1));
    // Bad config file.
    let cfg = scratch("broken.toml");
    fs::write(&cfg, "model = \"abelian_disk\"\nnot_a_key = 1\n").unwrap();
    let out = bundlemech(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    // Help is not an error.
    let out = bundlemech(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn failed_verification_exits_2() {
    let out = bundlemech(&[
        "check",
        "--model",
        "abelian_disk",
        "--samples",
        "3",
        "--tol",
        "1e-18",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["pass"], false);
}

#[test]
fn simulate_is_deterministic_and_flags_override_the_file() {
    let cfg = scratch("run.toml");
    fs::write(&cfg, "model = \"abelian_disk\"\nt_final = 0.1\ndt = 0.05\n").unwrap();
    let a_path = scratch("a.csv");
    let b_path = scratch("b.csv");
    for path in [&a_path, &b_path] {
        let out = bundlemech(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--dt",
            "0.02",
            "--output",
            path.to_str().unwrap(),
        ]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let a = fs::read(&a_path).unwrap();
    let b = fs::read(&b_path).unwrap();
    assert_eq!(a, b, "same configuration produced different bytes");

    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# model = abelian_disk\n"));
    // The flag overrode the file's dt = 0.05: the second row sits at t = 0.02.
    let second_row = text.lines().find(|l| l.starts_with("0.02,")).unwrap();
    assert!(second_row.split(',').count() == 9);
    assert!(!text.contains("\n0.05,"));
}

#[test]
fn simulate_streams_json_to_stdout() {
    let out = bundlemech(&[
        "simulate",
        "--model",
        "abelian_disk",
        "--t-final",
        "0.05",
        "--dt",
        "0.01",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let traj: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(traj["model"], "abelian_disk");
    assert_eq!(traj["times"].as_array().unwrap().len(), 6);
    assert!(traj["truncated"].is_null());
}

#[test]
fn compare_validates_the_reduction() {
    let out = bundlemech(&[
        "compare",
        "--model",
        "abelian_disk",
        "--t-final",
        "0.3",
        "--dt",
        "0.001",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["rows_compared"], 301);
    assert!(report["max_dx"].as_f64().unwrap() < 1e-7);
}
