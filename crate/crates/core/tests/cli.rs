mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const TOY: &str = "-(x1^2) + 1";

fn sfree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfree")).args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn data(name: &str) -> String {
    common::data_dir().join(name).to_string_lossy().into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn estimate_prints_both_sides() {
    let out = sfree(&["estimate", "--expr", TOY, "--at", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["under"], "-x1^2 + 1");
    assert_eq!(v["over"], "1");
    assert_eq!(v["value_at_base"], 1.0);
}

#[test]
fn estimate_rejects_bad_input() {
    assert_eq!(sfree(&["estimate", "--expr", "x1 +", "--at", "0"]).status.code(), Some(2));
    assert_eq!(sfree(&["estimate", "--expr", "log(x1)", "--at", "-1"]).status.code(), Some(5));
    assert_eq!(sfree(&["estimate"]).status.code(), Some(2));
    assert_eq!(sfree(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn cut_on_toy_problem() {
    let out = sfree(&["cut", "--expr", TOY, "--at", "0", "--lb", "0", "--ub", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let c = &v["cuts"][0];
    assert!((c["coeffs"][0].as_f64().unwrap() - 1.0).abs() <= 1e-9);
    assert_eq!(c["verdict"]["valid"], true);
}

#[test]
fn strengthen_writes_region_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_string_lossy().into_owned();
    let args = [
        "strengthen",
        "--expr",
        common::QUADRATIC,
        "--at",
        "1,1",
        "--lb",
        "0,0",
        "--ub",
        "2,2",
        "--tuy",
        "--samples",
        "21",
        "--out",
        &out_dir,
    ];
    let out = sfree(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let methods: Vec<&str> = v["cuts"].as_array().unwrap().iter().map(|c| c["method"].as_str().unwrap()).collect();
    assert!(methods.contains(&"ic") && methods.contains(&"ic+bounds"), "{methods:?}");
    let csv = std::fs::read_to_string(dir.path().join("region.csv")).unwrap();
    assert!(csv.starts_with("x,y,h,h_ave,hhat,hhat_tuy"));
    assert_eq!(csv.lines().count(), 1 + 21 * 21);
}

#[test]
fn monoidal_example() {
    let out = sfree(&["monoidal", "--expr", common::EXAMPLE_TWO, "--ub", "2,5", "--k", "1", "--directions", "2000"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let cut = v["cuts"].as_array().unwrap().iter().find(|c| c["method"] == "ic+monoidal").unwrap();
    assert!((cut["coeffs"][0].as_f64().unwrap() - 1.0).abs() <= 1e-3);
    assert_eq!(cut["verdict"]["valid"], true);
}

#[test]
fn pipeline_is_deterministic_without_timing() {
    let inst = data("monoidal_example.json");
    let args = ["pipeline", "--instance", &inst, "--bounds", "--monoidal", "--no-timing"];
    let (a, b) = (sfree(&args), sfree(&args));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert!(v.get("timing_ms").is_none_or(|t| t.is_null()));
}

#[test]
fn pipeline_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let satisfied = write(dir.path(), "ok.json", r#"{"n": 1, "c": [-1], "ub": [2], "nlcons": ["-(x1^2) + 1"]}"#);
    assert_eq!(sfree(&["pipeline", "--instance", &satisfied]).status.code(), Some(4));
    let unbounded = write(dir.path(), "unb.json", r#"{"n": 1, "c": [-1], "nlcons": ["x1"]}"#);
    assert_eq!(sfree(&["pipeline", "--instance", &unbounded]).status.code(), Some(3));
    let broken = write(dir.path(), "bad.json", r#"{"n": 1, "c": [1], "extra": 0}"#);
    assert_eq!(sfree(&["pipeline", "--instance", &broken]).status.code(), Some(2));
    let missing = dir.path().join("missing.json").to_string_lossy().into_owned();
    assert_eq!(sfree(&["pipeline", "--instance", &missing]).status.code(), Some(2));
}

#[test]
fn pipeline_writes_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_string_lossy().into_owned();
    let out = sfree(&["pipeline", "--instance", &data("toy.json"), "--no-timing", "--out", &out_dir]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["constraints"][0]["violated"], true);
}

#[test]
fn validate_flags_corrupted_cut() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"space": "original", "coeffs": [1.0], "rhs": 1.1, "method": "ic"}"#);
    let out = sfree(&["validate", "--cut", &bad, "--instance", &data("toy.json")]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    assert_eq!(v[0]["valid"], false);
    assert_eq!(v[0]["worst_point"][0], 1.0);
    let good = write(dir.path(), "good.json", r#"{"space": "original", "coeffs": [1.0], "rhs": 1.0, "method": "ic"}"#);
    let out = sfree(&["validate", "--cut", &good, "--expr", TOY, "--lb", "0", "--ub", "2"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn plot_estimate_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_string_lossy().into_owned();
    let out = sfree(&["plot", "estimate", "--expr", common::EXAMPLE_ONE, "--at", "0", "--out", &out_dir]);
    assert_eq!(out.status.code(), Some(0));
    let mut rdr = csv::Reader::from_path(dir.path().join("estimate.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["x", "f", "under", "over"]);
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let x: f64 = rec[0].parse().unwrap();
        let under: f64 = rec[2].parse().unwrap();
        assert!((under - common::example_one_under(x)).abs() <= 1e-12);
        rows += 1;
    }
    assert_eq!(rows, 501);
}
