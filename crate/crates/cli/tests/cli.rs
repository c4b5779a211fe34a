use std::path::PathBuf;
use std::process::{Command, Output};

use oplab::report::Report;

fn oplab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oplab")).args(args).output().expect("binary runs")
}

fn scenario_file(name: &str, body: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("oplab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn report(out: &Output) -> Report {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("bad report ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

#[test]
fn same_seed_same_report() {
    let args = ["run", "measurability", "cones", "--seed", "7"];
    let a = report(&oplab(&args));
    let b = report(&oplab(&args));
    assert!(!a.records.is_empty());
    assert_eq!(a.without_timings(), b.without_timings());
    let par = report(&oplab(&["run", "measurability", "cones", "--seed", "7", "--parallel"]));
    assert_eq!(a.without_timings(), par.without_timings());
    let other = report(&oplab(&["run", "measurability", "cones", "--seed", "8"]));
    assert_eq!(other.environment.seed, Some(8));
}

#[test]
fn passing_suite_exits_zero() {
    let out = oplab(&["run", "measurability", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert!(r.overall);
    assert!(r.records.iter().all(|c| c.suite == "measurability"));
}

#[test]
fn empty_selection_is_an_empty_passing_report() {
    let path = scenario_file("empty.json", r#"{"version":1,"suites":[]}"#);
    let out = oplab(&["run", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert!(r.overall && r.records.is_empty());
    assert_eq!(r.schema, "oplab-report/1");
}

#[test]
fn failing_check_exits_one() {
    let path = scenario_file(
        "tight.json",
        r#"{"version":1,"seed":5,"suites":["kms"],"trials":3,"tolerances":{"kms-real-axis":1e-300}}"#,
    );
    let out = oplab(&["run", "--scenario", path.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("suite,check,lhs,rhs,residual,tolerance,passed,runtime_ms"));
    assert!(text.lines().any(|l| l.starts_with("kms,kms-real-axis,") && l.contains(",false,")), "{text}");
}

#[test]
fn printed_closed_forms_fail() {
    let out = oplab(&["run", "paper-examples"]);
    assert_eq!(out.status.code(), Some(1));
    let r = report(&out);
    assert!(r.failures().all(|c| c.check.contains("-printed")));
    assert!(r.records.iter().filter(|c| c.check.contains("-exact")).all(|c| c.passed));
}

#[test]
fn unknown_suite_is_an_error() {
    let out = oplab(&["run", "no-such-suite", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-suite"));
}

#[test]
fn malformed_scenario_names_the_path() {
    let path = scenario_file(
        "bad.json",
        r#"{"version":1,"seed":1,"indices":{"p":[2,"two"]}}"#,
    );
    let out = oplab(&["run", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("indices.p[1]"), "{err}");
}

#[test]
fn randomized_suite_needs_a_seed() {
    let path = scenario_file("noseed.json", r#"{"version":1,"suites":["kms"]}"#);
    let out = oplab(&["run", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
    let out = oplab(&["run", "--scenario", path.to_str().unwrap(), "--seed", "4", "--suite", "measurability"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn report_to_file_and_schemas() {
    let path = scenario_file("out.json", "");
    let out = oplab(&["run", "measurability", "--seed", "2", "-o", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let r: Report = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(r.overall);
    for which in ["scenario", "report"] {
        let out = oplab(&["schema", which]);
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(v["$id"].as_str().unwrap().ends_with("/1"));
    }
}

fn validator(text: &str) -> jsonschema::Validator {
    jsonschema::validator_for(&serde_json::from_str(text).unwrap()).unwrap()
}

#[test]
fn default_run_matches_the_report_schema() {
    let out = oplab(&["run", "all", "--parallel"]);
    // Only the printed closed forms fail.
    assert_eq!(out.status.code(), Some(1));
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let v = validator(oplab_cli::REPORT_SCHEMA);
    assert!(v.is_valid(&value), "{:?}", v.iter_errors(&value).map(|e| e.to_string()).collect::<Vec<_>>());
    let r: Report = serde_json::from_value(value).unwrap();
    let suites: std::collections::BTreeSet<&str> = r.records.iter().map(|c| c.suite.as_str()).collect();
    assert_eq!(suites.len(), oplab::suites::SUITES.len());
    assert!(r.failures().all(|c| c.suite == "paper-examples" && c.check.contains("-printed")));
}

#[test]
fn bundled_scenario_matches_its_schema() {
    let v = validator(oplab_cli::SCENARIO_SCHEMA);
    let value: serde_json::Value = serde_json::from_str(oplab_cli::DEFAULT_SCENARIO).unwrap();
    assert!(v.is_valid(&value));
    assert!(!v.is_valid(&serde_json::json!({"version": 1, "extra": true})));
}

#[test]
fn two_level_kms_boundary() {
    let r = report(&oplab(&["run", "kms"]));
    let rec = r.records.iter().find(|c| c.check == "kms-scenario").expect("scenario record");
    assert!(rec.passed && rec.residual <= 1e-10, "{rec:?}");
}
