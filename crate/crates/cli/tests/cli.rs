use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lofiq::{load_tensors, save_tensors, Dtype, Tensor64};
use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lofiq"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn lofiq")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "lofiq {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    run(dir, args).status.code().unwrap()
}

fn json(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn enumerate_e2m1() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["enumerate", "e2m1"]);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("format E2M1"));
    assert_eq!(lines.next(), Some("count 15"));
    assert_eq!(lines.next(), Some("max 6"));
    let values: Vec<f64> = out.lines().filter_map(|l| l.parse().ok()).collect();
    assert_eq!(values.len(), 15);
    assert_eq!(values.first(), Some(&-6.0));
    assert_eq!(values.last(), Some(&6.0));
}

#[test]
fn enumerate_hif8_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["enumerate", "hif8", "--summary", "--interval", "-1", "1"]);
    assert!(out.contains("count 253"));
    assert!(out.contains("max 32768 (2^15)"));
    assert!(out.contains("(2^-22)"));
    assert!(out.contains("in [-1, 1] 129"));
    assert_eq!(out.lines().count(), 5);
}

#[test]
fn enumerate_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(dir.path(), &["enumerate", "e3m2", "-o", "v.txt"]);
    assert!(stdout.is_empty());
    assert!(fs::read_to_string(dir.path().join("v.txt")).unwrap().starts_with("format E3M2"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(p, &["enumerate", "bogus"]), 2);
    assert_eq!(code(p, &["compare", "--synth", "gaussian:4x4:1", "--formats", "int9"]), 2);
    assert_eq!(code(p, &["compare", "--synth", "nonsense", "--formats", "int8"]), 2);
    assert_eq!(code(p, &["smooth", "--x-synth", "gaussian:4x4:1", "-f", "int8"]), 2);
    assert_eq!(code(p, &["frobnicate"]), 2);
}

#[test]
fn exact_tensor_reports_infinite_sqnr() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let t = Tensor64::new(vec![2, 2], vec![1.0, 0.3125, -96.0, 0.5]).unwrap().with_name("exact");
    save_tensors(&[t.clone()], p.join("in.lqt"), Dtype::F64).unwrap();
    ok(p, &["quantize", "in.lqt", "-f", "hif8", "-o", "out.lqt"]);
    let back = load_tensors(p.join("out.lqt")).unwrap();
    assert_eq!(back, vec![t]);
    let report = json(&fs::read_to_string(p.join("out.json")).unwrap());
    assert_eq!(report[0]["tensor_name"], "exact");
    assert_eq!(report[0]["sqnr_db"], "inf");
    assert_eq!(report[0]["max_abs_err"], 0.0);
}

#[test]
fn pad_handles_ragged_axis() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let data = (0..4 * 60).map(|i| ((i * 37 % 101) as f64 - 50.0) / 10.0).collect();
    save_tensors(&[Tensor64::new(vec![4, 60], data).unwrap()], p.join("in.lqt"), Dtype::F64).unwrap();
    let args = ["quantize", "in.lqt", "-f", "mxfp4", "--role", "activation", "-o", "out.lqt"];
    assert_eq!(code(p, &args), 1);
    let mut padded = args.to_vec();
    padded.push("--pad");
    ok(p, &padded);
    assert_eq!(load_tensors(p.join("out.lqt")).unwrap()[0].shape(), &[4, 60]);
    let report = json(&fs::read_to_string(p.join("out.json")).unwrap());
    assert_eq!(report[0]["config"]["padded_extent"], "64");
}

#[test]
fn missing_input_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["quantize", "nope.lqt", "-f", "int8", "-o", "out.lqt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn csv_report_by_extension() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    save_tensors(&[Tensor64::new(vec![2, 32], vec![0.25; 64]).unwrap()], p.join("in.lqt"), Dtype::F32).unwrap();
    ok(p, &["quantize", "in.lqt", "-f", "int8", "-o", "out.lqt", "--report", "r.csv"]);
    let csv = fs::read_to_string(p.join("r.csv")).unwrap();
    assert!(csv.starts_with("tensor_name,format_name,granularity,sqnr_db"));
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn compare_rows_and_granularity() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = ok(
        p,
        &["compare", "--synth", "gaussian:8x64:1:seed=5", "--formats", "int8,hif8,mxfp4,nvfp4", "--role", "activation"],
    );
    let rows = json(&out);
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 4);
    let names: Vec<&str> = rows.iter().map(|r| r["format_name"].as_str().unwrap()).collect();
    assert_eq!(names, ["int8", "hif8", "mxfp4", "nvfp4"]);
    for r in rows {
        assert!(r["granularity"].as_str().unwrap().contains("per-token"));
        assert_eq!(r["tensor_name"], "gaussian:8x64:1:seed=5");
    }
}

#[test]
fn compare_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let a = ok(p, &["compare", "--synth", "gaussian:8x32:1:seed=9", "--formats", "int4"]);
    let b = ok(p, &["compare", "--synth", "gaussian:8x32:1", "--seed", "9", "--formats", "int4"]);
    assert_eq!(a, b);
}

#[test]
fn smooth_default_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(
        dir.path(),
        &["smooth", "--x-synth", "gaussian_outlier:32x64:1:0.01:50", "--w-synth", "gaussian:64x16:0.02", "-f", "int8"],
    );
    let v = json(&out);
    let alpha = v["alpha"].as_f64().unwrap();
    let grid: Vec<f64> = v["grid"].as_array().unwrap().iter().map(|g| g.as_f64().unwrap()).collect();
    assert_eq!(grid.len(), 9);
    assert!(grid.contains(&alpha));
    assert!(v["smooth_error"].as_f64().unwrap() <= v["rtn_error"].as_f64().unwrap());
}

#[test]
fn smooth_fixed_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(
        dir.path(),
        &["smooth", "--x-synth", "gaussian:16x64:1", "--w-synth", "gaussian:64x8:0.02", "-f", "hif4", "--alpha", "0.5"],
    );
    let v = json(&out);
    assert_eq!(v["alpha"], 0.5);
    assert_eq!(v["grid"], serde_json::json!([0.5]));
}

#[test]
fn svdq_full_rank_is_exact_branch() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(
        dir.path(),
        &[
            "svdq",
            "--x-synth",
            "gaussian_outlier:32x64:1:0.01:50",
            "--w-synth",
            "gaussian:64x16:0.02",
            "-f",
            "nvfp4",
            "--rank",
            "16",
        ],
    );
    let v = json(&out);
    assert_eq!(v["rank"], 16);
    assert_eq!(v["smoothing"], true);
    let svdq = v["svdq_error"].as_f64().unwrap();
    assert!(svdq <= v["smooth_error"].as_f64().unwrap());
    assert!(svdq < 1e-12);
}

#[test]
fn svdq_rank_too_large_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["svdq", "--x-synth", "gaussian:8x16:1", "--w-synth", "gaussian:16x4:1", "-f", "int8", "--rank", "5"];
    assert_eq!(code(dir.path(), &args), 1);
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let args = ["compare", "--synth", "gaussian_outlier:64x16:1:0.01:100:seed=2", "--formats", "hif4,int8"];
    assert_eq!(ok(p, &args), ok(p, &args));
    let t = Tensor64::new(vec![3, 64], (0..192).map(|i| (i as f64).sin()).collect()).unwrap();
    save_tensors(&[t], p.join("in.lqt"), Dtype::F64).unwrap();
    ok(p, &["quantize", "in.lqt", "-f", "hif4", "--role", "activation", "-o", "a.lqt", "--report", "a.csv"]);
    ok(p, &["quantize", "in.lqt", "-f", "hif4", "--role", "activation", "-o", "b.lqt", "--report", "b.csv"]);
    assert_eq!(fs::read(p.join("a.lqt")).unwrap(), fs::read(p.join("b.lqt")).unwrap());
    assert_eq!(fs::read(p.join("a.csv")).unwrap(), fs::read(p.join("b.csv")).unwrap());
}

#[test]
fn thread_override_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_lofiq"))
        .args(["enumerate", "e2m1", "--summary"])
        .env("LOFIQ_THREADS", "zero")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
