use std::path::{Path, PathBuf};

use clap::Parser;
use qnet::cli::{self, run_from_args, Cli, Command};

fn gallery(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("gallery").join(name).to_string_lossy().into_owned()
}

fn config(args: &[&str]) -> cli::RunConfig {
    let mut full = vec!["qnet"];
    full.extend_from_slice(args);
    match Cli::try_parse_from(full).unwrap().command {
        Command::Analyze(c)
        | Command::Reduce(c)
        | Command::Simulate(c)
        | Command::Couple(c)
        | Command::Dominate(c)
        | Command::Kernel(c)
        | Command::Sweep(c)
        | Command::Demo(c) => c,
    }
}

fn write_tmp(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn analyze_reports_tandem_loads() {
    let out = cli::analyze(&config(&["analyze", "--spec", &gallery("tandem.json")])).unwrap();
    assert!(out.contains("0.333333   0.333333"));
    assert!(out.contains("traffic condition holds at server 1"));
}

#[test]
fn analyze_flags_overload_without_failing() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = r#"{"num_servers":1,"num_classes":1,"lambda":3.0,"assign_prob":[[1.0]],"service_rate":[[2.0]],"routing":[[0.0]]}"#;
    let p = write_tmp(tmp.path(), "over.json", spec);
    let out = cli::analyze(&config(&["analyze", "--spec", p.to_str().unwrap()])).unwrap();
    assert!(out.contains("traffic condition FAILS at server 0"));
    assert_eq!(run_from_args(["qnet", "analyze", "--spec", p.to_str().unwrap()]), 0);
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_tmp(tmp.path(), "bad.json", "{ not json");
    assert_eq!(run_from_args(["qnet", "analyze", "--spec", bad.to_str().unwrap()]), 2);
    assert_eq!(run_from_args(["qnet", "analyze", "--spec", "/nonexistent.json"]), 2);
    assert_eq!(run_from_args(["qnet", "analyze"]), 2);
    assert_eq!(run_from_args(["qnet", "simulate", "--horizon", "0"]), 2);
    let out = tmp.path().join("k");
    assert_eq!(
        run_from_args(["qnet", "kernel", "--spec", &gallery("multiclass2x3.json"), "--out", out.to_str().unwrap()]),
        2
    );
}

#[test]
fn infeasible_reduction_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = r#"{"num_servers":1,"num_classes":2,"lambda":1.8,"assign_prob":[[0.5],[0.5]],"service_rate":[[10.0],[1.0]],"routing":[[0.0]]}"#;
    let p = write_tmp(tmp.path(), "inf.json", spec);
    let out = tmp.path().join("r");
    assert_eq!(run_from_args(["qnet", "reduce", "--spec", p.to_str().unwrap(), "--out", out.to_str().unwrap()]), 2);
}

#[test]
fn empty_sweep_grid_gives_empty_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let code = run_from_args([
        "qnet", "sweep", "--spec", &gallery("mm1.json"), "--multipliers", "", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["points"].as_array().unwrap().len(), 0);
    assert_eq!(std::fs::read_to_string(out.join("summary.csv")).unwrap().lines().count(), 1);
}

#[test]
fn simulate_writes_one_trace_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    let code = run_from_args([
        "qnet", "simulate", "--spec", &gallery("ring3.json"), "--horizon", "4000", "--seeds", "2,9", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    for f in ["trace_2.csv", "trace_9.csv", "report.json", "summary.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let trace = std::fs::read_to_string(out.join("trace_2.csv")).unwrap();
    assert!(trace.starts_with("epoch,event,total,x_0_0,x_0_1,x_0_2\n"));
}

#[test]
fn kernel_writes_lemma_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("k");
    let code = run_from_args([
        "qnet", "kernel", "--spec", &gallery("mm1.json"), "--cap", "30", "--n-max", "50", "--k", "10,100", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["lemma"][0]["passed"], true);
    assert!(std::fs::read_to_string(out.join("drift.csv")).unwrap().starts_with("server,state,k,direct,identity,interior\n"));
}
