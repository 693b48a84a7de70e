//! Runs the `rcw` binary against the bundled datasets.

use std::path::PathBuf;
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;

fn data(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "data", name].iter().collect();
    p.display().to_string()
}

fn rcw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcw"))
        .args(args)
        .env_remove("RCW_THREADS")
        .output()
        .expect("binary runs")
}

fn with_data<'a>(cmd: &'a str, file: &'a str, extra: &[&'a str]) -> Vec<String> {
    let mut v: Vec<String> = [cmd, "--data", file, "--y", "y", "--endog", "x", "--instruments", "z1,z2,z3", "--exog", "w", "--intercept"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn run_ok(args: &[String]) -> (String, Value) {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = rcw(&refs);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let v = serde_json::from_str(&text).unwrap();
    (text, v)
}

fn run_err(args: &[&str]) -> Value {
    let out = rcw(args);
    assert!(!out.status.success());
    assert!(out.stdout.is_empty());
    serde_json::from_slice(&out.stderr).expect("stderr carries a JSON error document")
}

#[test]
fn test_output_is_byte_identical_across_runs_and_thread_counts() {
    let file = data("strong_iv.csv");
    let args = with_data("test", &file, &["--beta0", "1.0", "--draws", "2000", "--seed", "3"]);
    let (a, _) = run_ok(&args);
    let (b, _) = run_ok(&args);
    assert_eq!(a, b);
    let mut one = vec!["--threads".to_string(), "1".to_string()];
    one.extend(args.clone());
    let mut four = vec!["--threads".to_string(), "4".to_string()];
    four.extend(args);
    assert_eq!(run_ok(&one).0, a);
    assert_eq!(run_ok(&four).0, a);
}

#[test]
fn test_document_has_result_and_provenance_fields() {
    let file = data("strong_iv.csv");
    let (text, v) = run_ok(&with_data("test", &file, &["--beta0", "0", "--draws", "1000", "--seed", "9", "--estimator", "gmm2"]));
    for key in [
        "beta_hat",
        "conventional_se",
        "wald_stat",
        "conventional_critical_value",
        "conditional_critical_value",
        "p_value_conditional",
        "reject",
    ] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    let prov = &v["provenance"];
    assert_eq!(prov["seed"], 9);
    assert_eq!(prov["draws"], 1000);
    assert_eq!(prov["estimator"]["name"], "gmm2");
    assert_eq!(prov["vcov"]["kind"], "hc");
    assert_eq!(prov["wald_form"], "efficient");
    assert_eq!((prov["n"].as_u64(), prov["k"].as_u64(), prov["p"].as_u64()), (Some(500), Some(3), Some(1)));
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["reject"], true);
    // full-precision floats
    assert!(text.contains("e0") || text.contains("e-") || text.contains("e1"));
}

#[test]
fn rejection_does_not_change_the_exit_code() {
    let file = data("strong_iv.csv");
    let (_, v) = run_ok(&with_data("test", &file, &["--beta0", "5", "--draws", "1000"]));
    assert_eq!(v["reject"], true);
}

#[test]
fn zero_alpha_is_a_config_error() {
    let file = data("strong_iv.csv");
    let args = with_data("test", &file, &["--beta0", "1", "--alpha", "0"]);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let e = run_err(&refs);
    assert_eq!(e["error"]["stage"], "config");
    assert_eq!(e["error"]["kind"], "config");
}

#[test]
fn cue_with_two_regressors_is_unsupported() {
    let file = data("strong_iv.csv");
    let e = run_err(&[
        "test", "--data", &file, "--y", "y", "--endog", "x,w", "--instruments", "z1,z2,z3", "--beta0", "1,0", "--estimator", "cue",
    ]);
    assert_eq!(e["error"]["kind"], "unsupported");
    assert!(e["error"]["message"].as_str().unwrap().contains("single endogenous regressor"));
}

#[test]
fn cue_bounds_take_one_comma_separated_value() {
    let file = data("strong_iv.csv");
    let (_, v) = run_ok(&with_data("test", &file, &["--estimator", "cue", "--cue-bounds", "-2,3", "--beta0", "1", "--draws", "1000"]));
    assert_eq!(v["provenance"]["estimator"]["bounds"][0].as_f64(), Some(-2.0));
    assert_eq!(v["provenance"]["estimator"]["bounds"][1].as_f64(), Some(3.0));
    let bad = with_data("test", &file, &["--estimator", "cue", "--cue-bounds", "-2", "--beta0", "1"]);
    let refs: Vec<&str> = bad.iter().map(String::as_str).collect();
    assert_eq!(run_err(&refs)["error"]["kind"], "usage");
}

#[test]
fn cluster_variance_needs_labels_and_runs_with_them() {
    let file = data("strong_iv.csv");
    let args = with_data("test", &file, &["--beta0", "1", "--vcov", "cluster", "--draws", "1000"]);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let e = run_err(&refs);
    assert_eq!(e["error"]["stage"], "config");
    let (_, v) = run_ok(&with_data("test", &file, &["--beta0", "1", "--vcov", "cluster", "--cluster", "g", "--draws", "1000"]));
    assert_eq!(v["provenance"]["vcov"]["kind"], "cluster");
}

#[test]
fn missing_column_reports_load_failure() {
    let file = data("strong_iv.csv");
    let e = run_err(&["test", "--data", &file, "--y", "nope", "--endog", "x", "--instruments", "z1", "--beta0", "1"]);
    assert_eq!(e["error"]["kind"], "missing_column");
}

#[test]
fn usage_errors_are_json_too() {
    let e = run_err(&["test", "--beta0", "1"]);
    assert_eq!(e["error"]["kind"], "usage");
}

#[test]
fn strong_dataset_gives_a_bounded_interval_containing_the_estimate() {
    let file = data("strong_iv.csv");
    let (_, v) = run_ok(&with_data("ci", &file, &["--draws", "1000", "--grid-points", "81", "--seed", "1"]));
    let intervals = v["intervals"].as_array().unwrap();
    assert_eq!(intervals.len(), 1);
    let (lo, hi) = (intervals[0][0].as_f64().unwrap(), intervals[0][1].as_f64().unwrap());
    let b = v["beta_hat"].as_f64().unwrap();
    assert!(lo < b && b < hi);
    assert_eq!(v["unbounded_left"], false);
    assert_eq!(v["unbounded_right"], false);
}

#[test]
fn irrelevant_dataset_gives_an_unbounded_set_with_sentinels() {
    let file = data("irrelevant_iv.csv");
    let (text, v) = run_ok(&with_data("ci", &file, &["--draws", "1000", "--grid-points", "41", "--seed", "1"]));
    assert_eq!(v["unbounded_left"], true);
    assert_eq!(v["unbounded_right"], true);
    assert!(text.contains("\"-inf\"") && text.contains("\"inf\""));
}

#[test]
fn grid_of_21_points_has_21_audit_entries() {
    let file = data("strong_iv.csv");
    let (_, v) = run_ok(&with_data("ci", &file, &["--draws", "1000", "--grid-lo", "0", "--grid-hi", "2", "--grid-points", "21"]));
    let pts = v["grid_points"].as_array().unwrap();
    assert_eq!(pts.len(), 21);
    assert!(pts.iter().all(|p| p["accepted"].is_boolean() && p["wald_stat"].is_number()));
}

#[test]
fn ci_writes_to_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ci.json");
    let file = data("strong_iv.csv");
    let args = with_data("ci", &file, &["--draws", "1000", "--grid-points", "21", "--output", path.to_str().unwrap()]);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = rcw(&refs);
    assert!(out.status.success());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["command"], "ci");
}

fn simulate_args(seed: &str) -> Vec<&str> {
    vec![
        "simulate", "--n", "200", "--k", "3", "--mu2", "4,16", "--error-kind", "homoskedastic,clustered", "--reps", "100",
        "--draws", "1000", "--offsets", "0,2", "--seed", seed,
    ]
}

#[test]
fn simulate_smoke_run_is_fast_well_formed_and_reproducible() {
    let start = Instant::now();
    let out = rcw(&simulate_args("5"));
    assert!(start.elapsed().as_secs() < 60);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut a: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(a["rows"].as_array().unwrap().len(), 8);
    for row in a["rows"].as_array().unwrap() {
        let r = row["cw_rate"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&r));
        let se = row["cw_mc_se"].as_f64().unwrap();
        assert!((se - (r * (1.0 - r) / 100.0).sqrt()).abs() < 1e-12);
    }
    let mut b: Value = serde_json::from_slice(&rcw(&simulate_args("5")).stdout).unwrap();
    a["runtime_secs"] = Value::Null;
    b["runtime_secs"] = Value::Null;
    assert_eq!(a, b);
}

#[test]
fn simulate_rejects_unknown_error_kind() {
    let e = run_err(&["simulate", "--error-kind", "bimodal", "--reps", "100"]);
    assert_eq!(e["error"]["stage"], "config");
}

#[test]
fn simulate_writes_table_alongside_json() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let table = dir.path().join("r.txt");
    let mut args = simulate_args("6");
    args.extend(["--output", json.to_str().unwrap(), "--table", table.to_str().unwrap()]);
    assert!(rcw(&args).status.success());
    let t = std::fs::read_to_string(&table).unwrap();
    assert!(t.starts_with("design"));
    assert_eq!(t.lines().count(), 10);
}
