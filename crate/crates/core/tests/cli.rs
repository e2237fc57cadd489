use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn noacim(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noacim"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(out: &Path, name: &str) -> Value {
    let text = std::fs::read_to_string(out.join(name)).expect("report written");
    serde_json::from_str(&text).expect("report is json")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn identity_certificate_fails_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("cert.json");
    std::fs::write(&cert, r#"{"K": {"dim": 1, "boxes": [[["1/10", "1"]]]}, "N": 5}"#).unwrap();
    let o = noacim(dir.path(), &["escape", "--map", "identity", "--certificate", cert.to_str().unwrap(), "--grid", "256", "--depth", "4"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("m(K)"), "{}", stderr(&o));
    let r = report(dir.path(), "certificate.json");
    assert_eq!(r["pass"], false);
    assert!(r["verdict"]["witness"].as_str().unwrap().contains("not above"));
    assert!(dir.path().join("density.csv").exists());
    assert!(dir.path().join("profile.csv").exists());
}

#[test]
fn empty_map_spec_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = noacim(dir.path(), &["linearize", "--map", ""]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("empty map spec"));
}

#[test]
fn empty_map_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("map.json");
    std::fs::write(&f, "  \n").unwrap();
    let o = noacim(dir.path(), &["tower", "--map", f.to_str().unwrap(), "--n0", "2", "--l", "1", "--eps0", "1/2"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("is empty"));
}

#[test]
fn malformed_rational_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = noacim(dir.path(), &["linearize", "--map", "surrogate:1/10", "--gamma", "one fifth"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("--gamma"));
}

#[test]
fn tiny_cap_exits_with_cap_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = noacim(dir.path(), &["--cap", "4", "tower", "--map", "doubling", "--n0", "4", "--l", "1", "--eps0", "1/10", "--base", "0,1/64"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn linearize_writes_a_report_with_its_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = noacim(dir.path(), &["linearize", "--map", "surrogate:1/10", "--r0", "1/100"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(dir.path(), "linearize.json");
    assert_eq!(r["config"]["gamma"], "1/5");
    assert_eq!(r["config"]["r0"], "1/100");
    assert!(r["ratio_f64"].as_f64().unwrap() > 0.8);
    assert!(r["V"].is_object() || r["V"].is_array());
}

#[test]
fn tower_on_a_given_arc_reports_levels() {
    let dir = tempfile::tempdir().unwrap();
    let o = noacim(dir.path(), &["--threads", "1", "tower", "--map", "rotation:1/8", "--n0", "2", "--l", "1", "--eps0", "1/2", "--depth", "8", "--base", "0,1/8"]);
    let r = report(dir.path(), "tower.json");
    assert_eq!(r["config"]["common"]["threads"], 1);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    // Eight first-visit arcs of length 1/8; U takes three of the even ones.
    assert_eq!(r["level_measures"], serde_json::json!(["3/8", "3/8"]));
    assert_eq!(r["level_sum"], "3/4");
    assert_eq!(r["u_components"], 3);
}

#[test]
fn slice_verify_on_a_short_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let o = noacim(dir.path(), &["--seed", "7", "slice-verify", "--eps", "1/2", "--delta", "1/2", "--samples", "200"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(dir.path(), "slicing.json");
    assert_eq!(r["pass"], true);
    assert_eq!(r["config"]["common"]["seed"], 7);
    assert!(!r["verdicts"].as_array().unwrap().is_empty());
}

#[test]
fn out_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_noacim"))
        .env("NOACIM_OUT_DIR", dir.path())
        .args(["linearize", "--map", "doubling"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("linearize.json").exists());
}

#[test]
fn pipeline_needs_a_map_or_the_demo() {
    let dir = tempfile::tempdir().unwrap();
    let o = noacim(dir.path(), &["pipeline"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("--map"));
}
