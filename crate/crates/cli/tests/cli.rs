use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn vimp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vimp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}, stderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn dump_dataset(dir: &Path, seed: &str) -> String {
    let csv = dir.join("data.csv");
    let csv = csv.to_str().unwrap().to_string();
    let out = vimp(&["simulate", "--scenario", "a", "--n", "200", "--seed", seed, "--dump", &csv]);
    stdout_json(&out);
    csv
}

#[test]
fn are_prints_cv_pair() {
    let v = stdout_json(&vimp(&[
        "are", "--model", "linear", "--beta", "1", "--rho", "0.5", "--sigma-x", "1", "--sigma-eps", "1", "--n", "1000",
    ]));
    assert!((v["are"].as_f64().unwrap() - 2.2).abs() < 1e-12);
    assert_eq!(v["sample_size"], 1000);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = vimp(&["are", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(vimp(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn help_exits_zero_everywhere() {
    for sub in ["select", "simulate", "are", "moments", "are-check", "report"] {
        let out = vimp(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("--config"), "{sub}");
    }
}

#[test]
fn help_documents_named_flags() {
    let text = |sub: &str| String::from_utf8_lossy(&vimp(&[sub, "--help"]).stdout).into_owned();
    let select = text("select");
    for f in ["--input", "--methods", "--alpha", "--regressor", "--crossfit", "--seed", "--out", "--one-sided", "--target"] {
        assert!(select.contains(f), "select {f}");
    }
    let simulate = text("simulate");
    for f in ["--scenario", "--n", "--seed", "--dump", "--replicates", "--emit-plot-csv", "--out"] {
        assert!(simulate.contains(f), "simulate {f}");
    }
    let are = text("are");
    for f in ["--model", "--beta", "--rho", "--sigma-x", "--sigma-eps", "--n"] {
        assert!(are.contains(f), "are {f}");
    }
    let check = text("are-check");
    for f in ["--example1", "--beta", "--rho", "--sigma-eps", "--replicates", "--n"] {
        assert!(check.contains(f), "are-check {f}");
    }
    assert!(text("moments").contains("--input"));
}

#[test]
fn non_numeric_cell_exits_two_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "a,b,y\n1,abc,3\n4,5,6\n").unwrap();
    let out = vimp(&["select", "--input", path.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 1") && err.contains("\"b\""), "{err}");
}

#[test]
fn randomized_commands_require_seed() {
    let out = vimp(&["simulate", "--scenario", "a", "--replicates", "2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn select_stdout_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dump_dataset(dir.path(), "3");
    let args = ["select", "--input", &csv, "--methods", "gcm,loco,dropout,permutation", "--seed", "7"];
    let a = vimp(&args);
    let b = vimp(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["results"].as_array().unwrap().len(), 80);
}

#[test]
fn select_writes_report_and_report_reads_it_back() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dump_dataset(dir.path(), "4");
    let out_path = dir.path().join("r.json");
    let out_path = out_path.to_str().unwrap();
    let sel = stdout_json(&vimp(&["select", "--input", &csv, "--seed", "1", "--out", out_path]));
    let full: Value = serde_json::from_str(&std::fs::read_to_string(out_path).unwrap()).unwrap();
    assert!(full["wall_time_seconds"]["gcm"].as_f64().unwrap() >= 0.0);
    assert_eq!(sel["wall_time_seconds"], serde_json::json!({}));
    let csv_out = vimp(&["report", "--input", out_path, "--format", "csv"]);
    assert!(csv_out.status.success());
    let text = String::from_utf8(csv_out.stdout).unwrap();
    assert!(text.starts_with("feature,index,method"));
    assert_eq!(text.lines().count(), 1 + 40);
}

#[test]
fn simulate_dump_writes_truth_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("b.csv");
    let v = stdout_json(&vimp(&[
        "simulate", "--scenario", "b", "--n", "100", "--seed", "3", "--dump", csv.to_str().unwrap(),
    ]));
    assert_eq!(v["active_set"].as_array().unwrap().len(), 8);
    let truth: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("b.truth.json")).unwrap()).unwrap();
    assert_eq!(truth["active_set"], v["active_set"]);
}

#[test]
fn simulate_summary_and_plot_csv() {
    let dir = tempfile::tempdir().unwrap();
    let plot = dir.path().join("plot.csv");
    let out = dir.path().join("summary.json");
    let args = [
        "simulate", "--scenario", "a", "--n", "200", "--replicates", "3", "--seed", "5",
        "--emit-plot-csv", plot.to_str().unwrap(), "--out", out.to_str().unwrap(),
    ];
    let first = vimp(&args);
    let v = stdout_json(&first);
    assert_eq!(v["methods"]["gcm"]["mean_p"].as_array().unwrap().len(), 20);
    assert!(v["methods"]["gcm"].get("wall_time_seconds").is_none());
    let full: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(full["methods"]["loco"]["wall_time_seconds"]["mean"].as_f64().unwrap() >= 0.0);
    let rows = std::fs::read_to_string(&plot).unwrap();
    assert!(rows.starts_with("feature,method,mean_p,sd_p\n"));
    assert_eq!(rows.lines().count(), 1 + 2 * 20);
    assert_eq!(vimp(&args).stdout, first.stdout);
}

#[test]
fn config_file_merges_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "# study settings\nsimulate.replicates = 2\nn = 150\nmethods = gcm\nregressor.kind = ridge\nregressor.ridge.penalty = 0.5\n",
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let v = stdout_json(&vimp(&["simulate", "--scenario", "a", "--seed", "1", "--config", cfg]));
    assert_eq!(v["replicates"], 2);
    assert!(v["methods"].get("loco").is_none());
    let v = stdout_json(&vimp(&["simulate", "--scenario", "a", "--seed", "1", "--config", cfg, "--replicates", "3"]));
    assert_eq!(v["replicates"], 3);
}

#[test]
fn config_with_unknown_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "no_such_option = 1\n").unwrap();
    let out = vimp(&["are", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_alpha_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dump_dataset(dir.path(), "2");
    assert_eq!(vimp(&["select", "--input", &csv, "--seed", "1", "--alpha", "1.5"]).status.code(), Some(1));
}

#[test]
fn lazy_needs_mlp() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dump_dataset(dir.path(), "2");
    let out = vimp(&["select", "--input", &csv, "--seed", "1", "--methods", "lazy_vi"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn moments_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    std::fs::write(&path, "xt,ft\n1,1\n-1,-1\n").unwrap();
    let v = stdout_json(&vimp(&["moments", "--input", path.to_str().unwrap()]));
    assert_eq!(v["e_xt2"], 1.0);
    assert_eq!(v["e_xt_ft"], 1.0);
    assert_eq!(v["e_ft4"], 1.0);
}

#[test]
fn are_check_example1_reports_both_values() {
    let v = stdout_json(&vimp(&[
        "are-check", "--example1", "--beta", "1", "--rho", "0.5", "--sigma-eps", "1", "--replicates", "60", "--n", "300", "--seed", "9",
    ]));
    assert!((v["example1_are"].as_f64().unwrap() - 2.2).abs() < 1e-12);
    assert_eq!(v["comparison"]["replicate_count"], 60);
    assert!(v["comparison"]["empirical_are"].as_f64().unwrap() > 0.0);
}

#[test]
fn simulate_condition_b_table() {
    let v = stdout_json(&vimp(&[
        "simulate", "--scenario", "b", "--n", "300", "--replicates", "2", "--seed", "1", "--condition-b",
    ]));
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 20);
    assert_eq!(rows[10]["applicable"], false);
}
