//! End-to-end runs of the `metastab` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jsonschema::JSONSchema;
use serde_json::Value;
use tempfile::TempDir;

const BD3: &str = r#"{"states": ["1","2","3"],
  "rates": [["1","2",1.0],["2","1",1.0],["2","3",1.0],["3","2",1.0]],
  "partition": {"valleys": [["1"],["3"]], "delta": ["2"]}}"#;

const BD3_BARE: &str = r#"{"states": ["1","2","3"],
  "rates": [["1","2",1.0],["2","1",1.0],["2","3",1.0],["3","2",1.0]]}"#;

const B2: &str = r#"{"states": ["1","2"], "rates": [["1","2",2.0],["2","1",3.0]],
  "partition": {"valleys": [["1"],["2"]]}}"#;

const C3: &str = r#"{"states": ["1","2","3"],
  "rates": [["1","2",1.0],["2","3",1.0],["3","1",1.0]]}"#;

const REVERSIBLE: &str = r#"{"states": ["a","b","c","d"],
  "rates": [["a","b",2.0],["b","a",1.0],["b","c",0.5],["c","b",3.0],
            ["c","d",1.0],["d","c",1.0],["a","c",0.25],["c","a",0.75]]}"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metastab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn spec_file(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok_json(out: &Output) -> Value {
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error_of(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("error line");
    serde_json::from_str::<Value>(line).unwrap()["error"].clone()
}

fn assert_schema_valid(report: &Value) {
    let schema: Value = serde_json::from_str(metastab::report::SCHEMA).unwrap();
    let compiled = JSONSchema::compile(&schema).expect("schema compiles");
    let msgs: Vec<String> = match compiled.validate(report) {
        Ok(()) => return,
        Err(errors) => errors
            .map(|e| format!("{} at {}", e, e.instance_path))
            .collect(),
    };
    panic!("report violates schema: {msgs:?}");
}

fn all_finite(v: &Value) -> bool {
    match v {
        Value::Number(n) => n.as_f64().is_some_and(f64::is_finite),
        Value::Array(a) => a.iter().all(all_finite),
        Value::Object(o) => o.values().all(all_finite),
        _ => true,
    }
}

#[test]
fn analyze_birth_death_reports_passing_identity() {
    let dir = TempDir::new().unwrap();
    let spec = spec_file(&dir, "bd3.json", BD3);
    let report = ok_json(&run(&["analyze", "--spec", s(&spec), "--theta", "1"]));
    assert_schema_valid(&report);
    assert!(all_finite(&report));
    let reduced = &report["sections"]["reduced_model"];
    assert_eq!(reduced["identity"]["check"], "pass");
    assert_eq!(reduced["theta_source"], "user");
    assert!(reduced["rates"][0][0].is_null());
    assert!((reduced["rates"][0][1].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((reduced["rates"][1][0].as_f64().unwrap() - 0.5).abs() < 1e-12);

    let default = ok_json(&run(&["analyze", "--spec", s(&spec)]));
    let reduced = &default["sections"]["reduced_model"];
    assert_eq!(reduced["theta_source"], "default");
    let theta = reduced["theta"].as_f64().unwrap();
    assert!((reduced["rates"][0][1].as_f64().unwrap() - 0.5 * theta).abs() < 1e-12);
}

#[test]
fn analyze_and_cycles_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let spec = spec_file(&dir, "bd3.json", BD3);
    for args in [
        vec!["analyze", "--spec", s(&spec)],
        vec!["cycles", "--spec", s(&spec)],
        vec!["analyze", "--model", "zero_range:L=3,N=6,alpha=2"],
    ] {
        let a = run(&args);
        let b = run(&args);
        assert_eq!(a.status.code(), Some(0));
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn out_file_matches_stdout() {
    let dir = TempDir::new().unwrap();
    let spec = spec_file(&dir, "bd3.json", BD3);
    let out = dir.path().join("report.json");
    let res = run(&["analyze", "--spec", s(&spec), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(0));
    assert_eq!(fs::read(&out).unwrap(), res.stdout);
}

#[test]
fn separate_partition_file_is_used() {
    let dir = TempDir::new().unwrap();
    let spec = spec_file(&dir, "bd3.json", BD3_BARE);
    let part = spec_file(
        &dir,
        "p.json",
        r#"{"valleys": [["1"],["3"]], "delta": ["2"]}"#,
    );
    let report = ok_json(&run(&[
        "analyze",
        "--spec",
        s(&spec),
        "--partition",
        s(&part),
    ]));
    assert_schema_valid(&report);
    assert_eq!(report["input"]["partition"], s(&part));
    assert_eq!(report["sections"]["reduced_model"]["delta"][0], "2");
}

#[test]
fn missing_partition_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let spec = spec_file(&dir, "bd3.json", BD3_BARE);
    let out = run(&["analyze", "--spec", s(&spec)]);
    assert_eq!(out.status.code(), Some(2));
    let err = error_of(&out);
    assert_eq!(err["exit_code"], 2);
    assert!(err["message"]
        .as_str()
        .unwrap()
        .contains("partition required"));
}

#[test]
fn usage_errors_exit_with_two() {
    let out = run(&["analyze", "--model", "glued_cubes:d=2,N=4", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(run(&["validate", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["analyze"]).status.code(), Some(2));
    let out = run(&["analyze", "--model", "glued_cubes:d=2,N=4,q=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["kind"], "BadParams");
}

#[test]
fn malformed_spec_reports_json_error() {
    let dir = TempDir::new().unwrap();
    let spec = spec_file(
        &dir,
        "bad.json",
        r#"{"states": ["a","b"], "rates": [["a","c",1.0]]}"#,
    );
    let out = run(&["cycles", "--spec", s(&spec)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["kind"], "UnknownState");
}

#[test]
fn oversized_models_hit_the_resource_guard() {
    let out = run(&["analyze", "--model", "zero_range:L=20,N=40,alpha=2"]);
    assert_eq!(out.status.code(), Some(3));
    let err = error_of(&out);
    assert_eq!(err["kind"], "TooLarge");
    assert_eq!(err["exit_code"], 3);
}

#[test]
fn glued_squares_have_symmetric_adjacent_rates() {
    let report = ok_json(&run(&["analyze", "--model", "glued_cubes:d=2,N=8,ell=2"]));
    assert_schema_valid(&report);
    let reduced = &report["sections"]["reduced_model"];
    assert_eq!(reduced["valleys"].as_array().unwrap().len(), 4);
    assert!(
        reduced["symmetry"]["adjacent_rate_spread"]
            .as_f64()
            .unwrap()
            <= 1e-9
    );
    assert_eq!(reduced["identity"]["check"], "pass");
}

#[test]
fn potential_walk_model_analyzes() {
    let report = ok_json(&run(&["analyze", "--model", "potential_rw:N=20"]));
    assert_schema_valid(&report);
    assert_eq!(
        report["sections"]["reduced_model"]["valleys"]
            .as_array()
            .unwrap()
            .len(),
        2
    );
}

#[test]
fn cycles_of_directed_triangle_and_reversible_chain() {
    let dir = TempDir::new().unwrap();
    let c3 = spec_file(&dir, "c3.json", C3);
    let report = ok_json(&run(&["cycles", "--spec", s(&c3)]));
    assert_schema_valid(&report);
    let section = &report["sections"]["cycles"];
    let cycles = section["cycles"].as_array().unwrap();
    assert_eq!(cycles.len(), 1);
    assert_eq!(cycles[0]["states"].as_array().unwrap().len(), 3);
    assert!(section["residual"].as_f64().unwrap() <= 1e-12);

    let rev = spec_file(&dir, "rev.json", REVERSIBLE);
    let report = ok_json(&run(&["cycles", "--spec", s(&rev)]));
    assert_schema_valid(&report);
    let section = &report["sections"]["cycles"];
    let cycles = section["cycles"].as_array().unwrap();
    assert_eq!(cycles.len(), 4);
    assert!(cycles
        .iter()
        .all(|c| c["states"].as_array().unwrap().len() == 2));
    assert!(section["residual"].as_f64().unwrap() <= 1e-12);

    let report = ok_json(&run(&[
        "cycles",
        "--model",
        "zero_range:L=3,N=5,alpha=2,p=0.7",
    ]));
    assert!(report["sections"]["cycles"]["residual"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn simulate_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let spec = spec_file(&dir, "b2.json", B2);
    let run_into = |name: &str, jobs: &str| {
        let out = dir.path().join(name);
        let res = run(&[
            "simulate",
            "--spec",
            s(&spec),
            "--start",
            "1",
            "--horizon",
            "5",
            "--trials",
            "2",
            "--seed",
            "7",
            "--jobs",
            jobs,
            "--out",
            s(&out),
        ]);
        assert_eq!(
            res.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&res.stderr)
        );
        out
    };
    let a = run_into("a", "1");
    let b = run_into("b", "1");
    let c = run_into("c", "2");
    let mut files: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(
        files,
        ["summary.json", "trajectory_0000.csv", "trajectory_0001.csv"]
    );
    for f in &files {
        let bytes = fs::read(a.join(f)).unwrap();
        assert_eq!(bytes, fs::read(b.join(f)).unwrap(), "{f}");
        assert_eq!(bytes, fs::read(c.join(f)).unwrap(), "{f}");
    }
    let summary: Value =
        serde_json::from_slice(&fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert_schema_valid(&summary);
    let sim = &summary["sections"]["simulation"];
    let occ: f64 = sim["occupation_mean"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_f64().unwrap())
        .sum();
    assert!((occ - 1.0).abs() < 1e-12);
    assert!(sim["coarse_jumps_total"].is_array());
}

#[test]
fn trace_surgery_writes_only_valley_symbols() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sim");
    let res = run(&[
        "simulate",
        "--model",
        "glued_cubes:d=2,N=8",
        "--start",
        "1:4,4",
        "--horizon",
        "2000",
        "--surgery",
        "trace",
        "--seed",
        "3",
        "--out",
        s(&out),
    ]);
    assert_eq!(
        res.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let csv = fs::read_to_string(out.join("trajectory_0000.csv")).unwrap();
    let mut rows = csv.lines().skip(1).peekable();
    assert!(rows.peek().is_some());
    for row in rows {
        let symbol = row.rsplit(',').next().unwrap();
        assert!(["1", "2", "3", "4"].contains(&symbol), "row {row}");
    }
}

#[test]
fn last_passage_from_the_separating_set_is_rejected() {
    let dir = TempDir::new().unwrap();
    let spec = spec_file(&dir, "bd3.json", BD3);
    let out = dir.path().join("sim");
    let res = run(&[
        "simulate",
        "--spec",
        s(&spec),
        "--start",
        "2",
        "--horizon",
        "1",
        "--surgery",
        "last_passage",
        "--out",
        s(&out),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(error_of(&res)["kind"], "StartsInDelta");
    let res = run(&[
        "simulate",
        "--spec",
        s(&spec),
        "--start",
        "9",
        "--horizon",
        "1",
        "--out",
        s(&out),
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn validate_without_separating_set_has_zero_occupation() {
    let dir = TempDir::new().unwrap();
    let spec = spec_file(&dir, "b2.json", B2);
    let report = ok_json(&run(&[
        "validate",
        "--spec",
        s(&spec),
        "--trials",
        "200",
        "--seed",
        "1",
    ]));
    assert_schema_valid(&report);
    assert!(all_finite(&report));
    let t2 = &report["sections"]["validation"]["t2"];
    let rows = t2["rows"].as_array().unwrap();
    assert!(!rows.is_empty());
    for row in rows {
        assert_eq!(row["mean"].as_f64().unwrap(), 0.0);
        assert_eq!(row["stderr"].as_f64().unwrap(), 0.0);
    }
    assert_eq!(t2["worst"].as_f64().unwrap(), 0.0);
}

#[test]
fn validate_is_independent_of_jobs() {
    let dir = TempDir::new().unwrap();
    let spec = spec_file(&dir, "bd3.json", BD3);
    let base = [
        "validate",
        "--spec",
        s(&spec),
        "--trials",
        "500",
        "--seed",
        "11",
        "--jobs",
    ];
    let one = run(&[&base[..], &["1"]].concat());
    let four = run(&[&base[..], &["4"]].concat());
    let report = ok_json(&one);
    assert_schema_valid(&report);
    assert_eq!(one.stdout, four.stdout);
}
