//! Command-line behaviour: exit codes, outputs and reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tcs(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tcs"))
        .args(args)
        .current_dir(cwd)
        .env_remove("TCS_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const SMALL: &str = r#"{
  "mode": "ent", "geometry": "back2back", "n_events": 4000, "seed": 3,
  "options": {"force_scd_interaction": true, "analyzing_bias": {"window_deg": [50, 140], "fraction": 0.7},
              "samples": ["all", "tcs"]}
}"#;

#[test]
fn run_then_analyze_and_deconvolve() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "c.json", SMALL);
    let o = tcs(&["run", "-c", cfg.to_str().unwrap(), "--out", "a", "--workers", "3"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["truth.ndjson", "events.ndjson", "provenance.json", "report.json", "dphi_lab_all.csv", "plots/r_vs_theta_ics.svg"] {
        assert!(d.path().join("a").join(f).exists(), "{f}");
    }
    let o = tcs(&["analyze", "-c", cfg.to_str().unwrap(), "-e", "a/events.ndjson", "-o", "b"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let read = |p: &str| std::fs::read(d.path().join(p)).unwrap();
    assert_eq!(read("a/report.json"), read("b/report.json"));
    let r = "a/report.json";
    let o = tcs(&["deconvolve", "--expt", r, "--sim-all", r, "--sim-tcs", r, "--out", "c"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.path().join("c/deconvolved.json").exists());
}

#[test]
fn output_dir_from_environment() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "c.json", &SMALL.replace("4000", "200"));
    let o = Command::new(env!("CARGO_BIN_EXE_tcs"))
        .args(["simulate", "-c", cfg.to_str().unwrap()])
        .current_dir(d.path())
        .env("TCS_OUTPUT_DIR", "from-env")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(d.path().join("from-env/provenance.json").exists());
    let o = tcs(&["simulate", "-c", cfg.to_str().unwrap()], d.path());
    assert_eq!(code(&o), 0);
    assert!(d.path().join("tcs-out/events.ndjson").exists());
}

#[test]
fn config_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let zero = write(d.path(), "z.json", r#"{"mode": "ent", "geometry": "back2back", "n_events": 0}"#);
    let o = tcs(&["simulate", "-c", zero.to_str().unwrap()], d.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_events"));
    let bad = write(d.path(), "b.json", r#"{"mode": "ent", "geometry": "back2back", "n_events": 5, "cuts": {"dphi_bins": -1}}"#);
    let o = tcs(&["simulate", "-c", bad.to_str().unwrap()], d.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cuts.dphi_bins"));
    assert_eq!(code(&tcs(&["simulate"], d.path())), 2);
    assert_eq!(code(&tcs(&["bogus"], d.path())), 2);
}

#[test]
fn missing_files_exit_3() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&tcs(&["simulate", "-c", "nope.json"], d.path())), 3);
    assert_eq!(code(&tcs(&["xsec", "--grid", "nope.json"], d.path())), 3);
    let cfg = write(d.path(), "c.json", SMALL);
    assert_eq!(code(&tcs(&["analyze", "-c", cfg.to_str().unwrap(), "-e", "nope.ndjson"], d.path())), 3);
}

#[test]
fn schema_mismatch_exits_4() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "c.json", SMALL);
    write(d.path(), "e.ndjson", "{\"schema_version\": 99, \"event_index\": 0, \"weight\": 1, \"dm0\": [], \"dm1\": []}\n");
    assert_eq!(code(&tcs(&["analyze", "-c", cfg.to_str().unwrap(), "-e", "e.ndjson"], d.path())), 4);
    write(d.path(), "r.json", "{\"schema_version\": 7}");
    assert_eq!(code(&tcs(&["deconvolve", "--expt", "r.json", "--sim-all", "r.json", "--sim-tcs", "r.json"], d.path())), 4);
}

#[test]
fn xsec_table() {
    let d = tempfile::tempdir().unwrap();
    let g = write(d.path(), "g.json", r#"{"theta1_deg": [81.7, 90], "theta2p_deg": [81.7, 90]}"#);
    let a = tcs(&["xsec", "--grid", g.to_str().unwrap()], d.path());
    let b = tcs(&["xsec", "--grid", g.to_str().unwrap()], d.path());
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
    let last: f64 = text.lines().last().unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!((last - 2.6).abs() < 1e-9);

    let empty = write(d.path(), "e.json", r#"{"theta1_deg": [], "theta2p_deg": []}"#);
    let o = tcs(&["xsec", "--grid", empty.to_str().unwrap(), "--out", "t.csv"], d.path());
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(d.path().join("t.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("theta1_deg,theta2p_deg,"));

    let bad = write(d.path(), "x.json", r#"{"theta1_deg": [10, 190], "theta2p_deg": [90]}"#);
    let o = tcs(&["xsec", "--grid", bad.to_str().unwrap()], d.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.theta1_deg[1]"));
}

#[test]
fn report_prints_schemas() {
    let d = tempfile::tempdir().unwrap();
    let o = tcs(&["report", "--help"], d.path());
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("schema_version"));
    for name in ["config", "report", "truth", "detector", "provenance"] {
        let o = tcs(&["report", "--schema", name], d.path());
        assert_eq!(code(&o), 0);
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert!(v.get("$schema").is_some());
    }
}

#[test]
fn seed_and_workers_flags() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "c.json", &SMALL.replace("4000", "1500"));
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&tcs(&["simulate", "-c", c, "--workers", "1", "-o", "w1"], d.path())), 0);
    assert_eq!(code(&tcs(&["simulate", "-c", c, "--workers", "8", "-o", "w8"], d.path())), 0);
    assert_eq!(code(&tcs(&["simulate", "-c", c, "--seed", "99", "-o", "s99"], d.path())), 0);
    let read = |p: &str| std::fs::read(d.path().join(p)).unwrap();
    assert_eq!(read("w1/events.ndjson"), read("w8/events.ndjson"));
    assert_ne!(read("w1/events.ndjson"), read("s99/events.ndjson"));
}
