use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lcmpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcmpc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn paper_cfg() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/paper.cfg")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_all_outputs_and_compensates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = lcmpc(&["simulate", "--config", s(&paper_cfg()), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "effective.cfg",
        "manifest.json",
        "summary.txt",
        "thd.csv",
        "thd.txt",
        "compensated/samples.csv",
        "compensated/periods.csv",
        "compensated/spectrum.csv",
        "uncompensated/samples.csv",
        "uncompensated/spectrum.csv",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let thd = fs::read_to_string(out.join("thd.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(thd.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let name = headers.iter().position(|h| h == "signal").unwrap();
    let value = headers.iter().position(|h| h == "thd_percent").unwrap();
    let mut seen = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let v: f64 = rec[value].parse().unwrap();
        match &rec[name] {
            "compensated.v_c" | "compensated.i_l" => assert!(v < 1.0, "{}: {v}", &rec[name]),
            "uncompensated.v_c" => assert!((v - 15.8).abs() < 1.0, "{v}"),
            "uncompensated.i_l" => assert!((v - 59.8).abs() < 1.0, "{v}"),
            other => panic!("unexpected row {other}"),
        }
        seen += 1;
    }
    assert_eq!(seen, 4);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["version"].as_str().unwrap().starts_with("0.1.0"));

    let thd_cmd = lcmpc(&["thd", s(&out.join("compensated/samples.csv"))]);
    assert_eq!(thd_cmd.status.code(), Some(0));
    let thd_unc = lcmpc(&["thd", s(&out.join("uncompensated/samples.csv"))]);
    assert_eq!(thd_unc.status.code(), Some(1), "uncompensated v_c exceeds the limit");

    let log = lcmpc(&[
        "phase-portrait",
        "--out",
        s(&dir.path().join("portrait")),
        "--log",
        s(&out.join("compensated/samples.csv")),
    ]);
    assert_eq!(log.status.code(), Some(0), "{}", String::from_utf8_lossy(&log.stderr));
    assert!(dir.path().join("portrait/phase_portrait.csv").is_file());
}

#[test]
fn effective_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = lcmpc(&["simulate", "--config", s(&paper_cfg()), "--out", s(&a), "--mode", "compensated"]);
    assert_eq!(o.status.code(), Some(0));
    let o = lcmpc(&["simulate", "--config", s(&a.join("effective.cfg")), "--out", s(&b), "--mode", "compensated"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        fs::read(a.join("compensated/samples.csv")).unwrap(),
        fs::read(b.join("compensated/samples.csv")).unwrap()
    );
    assert!(!a.join("uncompensated").exists());
}

#[test]
fn uncompensated_mode_runs_one_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let o = lcmpc(&["simulate", "--config", s(&paper_cfg()), "--out", s(dir.path()), "--mode", "uncompensated"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("uncompensated/samples.csv").is_file());
    assert!(!dir.path().join("compensated").exists());
}

#[test]
fn missing_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = lcmpc(&["simulate", "--config", s(&dir.path().join("nope.cfg")), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_config_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "[grid]\nR1_ohm = 100\nL2_H = banana\n").unwrap();
    let o = lcmpc(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(":3"), "{err}");
}

#[test]
fn phase_portrait_of_the_map() {
    let dir = tempfile::tempdir().unwrap();
    let o = lcmpc(&["phase-portrait", "--out", s(dir.path()), "--steps", "500"]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("phase_portrait.csv")).unwrap();
    assert!(text.lines().count() > 500);
    let hopf = lcmpc(&["phase-portrait", "--out", s(&dir.path().join("h")), "--hopf", "--steps", "100"]);
    assert_eq!(hopf.status.code(), Some(0));
}

#[test]
fn phase_portrait_rejects_a_missing_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let o = lcmpc(&["phase-portrait", "--out", s(dir.path()), "--mu", "-0.05"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn kernel_validation_passes() {
    let o = lcmpc(&["validate", "kernel"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
}
