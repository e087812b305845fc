//! End-to-end runs of the `nfisac` binary.

use std::path::Path;
use std::process::{Command, Output};

use nfisac::cli::{BEAM_HEADER, CRLB_HEADER, ESTIMATE_HEADER, RATE_HEADER, SUMMARY_HEADER, TRIALS_HEADER};

const SMALL: &str = r#"{
    "radii_m": [0.5], "distances_m": [12], "trials": 2, "theta_deg": 30,
    "mc_subcarriers": 16, "verbosity": "error",
    "grid": {"mode": "resolving", "d_max_m": 30, "n_basins": 4}
}"#;

fn nfisac(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nfisac"))
        .current_dir(dir)
        .env_remove("NFISAC_CONFIG")
        .args(args)
        .output()
        .unwrap()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.json"), SMALL).unwrap();
    dir
}

/// Provenance comment, then the header row.
fn header(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# nfisac "));
    lines.next().unwrap().split(',').map(str::to_string).collect()
}

#[test]
fn every_subcommand_writes_its_header() {
    let dir = workspace();
    let p = dir.path();
    let cases: [(&[&str], &[&str]); 5] = [
        (&["crlb-sweep"], CRLB_HEADER),
        (&["optimize-beamformer", "--radius", "0.5", "--distance", "12"], BEAM_HEADER),
        (&["estimate", "--radius", "0.5", "--distance", "12", "--theta-deg", "45"], ESTIMATE_HEADER),
        (&["monte-carlo", "--trials-out", "trials.csv"], SUMMARY_HEADER),
        (&["rate-sweep"], RATE_HEADER),
    ];
    for (args, expected) in cases {
        let out = format!("{}.csv", args[0]);
        let mut full = vec!["--config", "small.json"];
        full.extend_from_slice(args);
        full.extend_from_slice(&["--out", &out]);
        let o = nfisac(p, &full);
        assert!(o.status.success(), "{}: {}", args[0], String::from_utf8_lossy(&o.stderr));
        assert_eq!(header(&p.join(&out)), expected, "{}", args[0]);
        assert!(p.join(&out).with_extension("json").exists(), "{} sidecar", args[0]);
    }
    assert_eq!(header(&p.join("trials.csv")), TRIALS_HEADER);
}

#[test]
fn zero_noise_estimate_recovers_the_scenario() {
    let dir = workspace();
    std::fs::write(
        dir.path().join("s.json"),
        r#"{"radius_m": 1.0, "d_m": 20, "theta_deg": 100, "seed": 3, "zero_noise": true}"#,
    )
    .unwrap();
    let o = nfisac(dir.path(), &["--config", "small.json", "estimate", "--scenario", "s.json", "--out", "e.csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("e.csv")).unwrap();
    let row: Vec<f64> = text.lines().nth(2).unwrap().split(',').take(5).map(|x| x.parse().unwrap()).collect();
    assert!((row[3] - 20.0).abs() < 1e-6, "{row:?}");
    assert!((row[4] - 100.0).abs() < 1e-6, "{row:?}");
}

#[test]
fn seed_flag_changes_monte_carlo_output() {
    let dir = workspace();
    let p = dir.path();
    for (seed, out) in [("1", "a.csv"), ("1", "b.csv"), ("2", "c.csv")] {
        let o = nfisac(p, &["--config", "small.json", "--seed", seed, "monte-carlo", "--out", out]);
        assert!(o.status.success());
    }
    let read = |f: &str| std::fs::read(p.join(f)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_ne!(read("a.csv"), read("c.csv"));
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = workspace();
    let p = dir.path();
    for (w, out) in [("1", "w1.csv"), ("3", "w3.csv")] {
        let o = nfisac(p, &["--config", "small.json", "--workers", w, "rate-sweep", "--out", out]);
        assert!(o.status.success());
    }
    assert_eq!(std::fs::read(p.join("w1.csv")).unwrap(), std::fs::read(p.join("w3.csv")).unwrap());
}

#[test]
fn config_is_found_through_the_environment() {
    let dir = workspace();
    let o = Command::new(env!("CARGO_BIN_EXE_nfisac"))
        .current_dir(dir.path())
        .env("NFISAC_CONFIG", "small.json")
        .args(["crlb-sweep", "--out", "env.csv"])
        .output()
        .unwrap();
    assert!(o.status.success());
    let text = std::fs::read_to_string(dir.path().join("env.csv")).unwrap();
    // one radius and one distance in the small config
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn failures_exit_nonzero_with_a_json_error() {
    let dir = workspace();
    let p = dir.path();
    std::fs::write(p.join("bad.json"), r#"{"carrier_ghz": -60}"#).unwrap();
    std::fs::write(p.join("typo.json"), r#"{"trails": 5}"#).unwrap();
    // a regular file where the output directory should be
    std::fs::write(p.join("blocker"), "").unwrap();
    let cases: [(&[&str], i32, &str); 5] = [
        (&["--config", "bad.json", "crlb-sweep"], 1, "carrier_ghz"),
        (&["--config", "typo.json", "crlb-sweep"], 1, "trails"),
        (&["--config", "missing.json", "crlb-sweep"], 1, "missing.json"),
        (&["--config", "small.json", "optimize-beamformer", "--radius", "2", "--distance", "1"], 1, "error"),
        (&["--config", "small.json", "crlb-sweep", "--out", "blocker/x.csv"], 2, "cannot write"),
    ];
    for (args, code, needle) in cases {
        let o = nfisac(p, args);
        assert_eq!(o.status.code(), Some(code), "{args:?}");
        let err = String::from_utf8_lossy(&o.stderr);
        let line = err.lines().find(|l| l.starts_with('{')).unwrap_or_else(|| panic!("{args:?}: {err}"));
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["error"]["message"].as_str().unwrap().contains(needle) || needle == "error", "{line}");
    }
    let o = nfisac(p, &["no-such-command"]);
    assert_ne!(o.status.code(), Some(0));
}
