use std::path::Path;
use std::process::{Command, Output};

use oadm::Dataset;

fn oadm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oadm")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: [&str; 6] = ["--n", "20", "--passes", "3", "--set", "N=30"];

#[test]
fn run_prints_a_summary_and_writes_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("run.csv");
    let mut args = vec!["run", "--out", path(&csv)];
    args.extend(SMALL);
    let out = oadm(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["rounds"], 90);
    assert_eq!(summary["solver"], "oadm");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("t,loss,g_value,violation_sq,r1_cum"));
    assert_eq!(text.lines().count(), 91);
}

#[test]
fn identical_runs_write_identical_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let csv = dir.path().join(name);
        let mut args = vec!["run", "--solver", "rda", "--seed", "4", "--out", path(&csv)];
        args.extend(SMALL);
        assert!(oadm(&args).status.success());
        texts.push(std::fs::read(&csv).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn grid_writes_one_csv_per_seed_and_the_mean_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["grid", "--seeds", "1,2,3", "--out", path(dir.path())];
    args.extend(SMALL);
    let out = oadm(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for seed in 1..=3 {
        assert!(dir.path().join(format!("seed-{seed}.csv")).exists());
    }
    let summaries: Vec<serde_json::Value> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summaries.len(), 3);
    let mean = std::fs::read_to_string(dir.path().join("nnz_mean.csv")).unwrap();
    assert_eq!(mean.lines().count(), 91);
    let first: f64 = mean.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    let expected = summaries.iter().map(|s| s["nnz"][0].as_f64().unwrap()).sum::<f64>() / 3.0;
    assert_eq!(first, expected);
}

#[test]
fn dataset_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("data.txt");
    let out = oadm(&["dataset", "--problem", "tv", "--n", "12", "--seed", "9", "--set", "N=15", "--out", path(&file)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ds = Dataset::from_text(&std::fs::read_to_string(&file).unwrap()).unwrap();
    assert_eq!((ds.len(), ds.dim(), ds.seed), (15, 12, 9));
}

#[test]
fn bad_input_exits_with_one() {
    assert_eq!(oadm(&["run", "--solver", "newton"]).status.code(), Some(1));
    assert_eq!(oadm(&["run", "--set", "colour=red"]).status.code(), Some(1));
    assert_eq!(oadm(&["run", "--solver", "oadm-eta0", "--schedule", "sqrt"]).status.code(), Some(1));
    assert_eq!(oadm(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(oadm(&["--help"]).status.code(), Some(0));
}
