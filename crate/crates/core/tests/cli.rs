use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use viral_rd::cli::{parse_config, run_subcommand, Command as Sub, RunOptions};

const BIN: &str = env!("CARGO_BIN_EXE_viral-rd");

/// Stable scenario, `N k ‖λ‖∞ / (μ_T μ_V) = 0.5`.
fn stable_config(t_end: f64, snapshot_every: usize) -> String {
    format!(
        r#"{{
  "grid": {{"dim": 1, "lengths": [1.0], "nodes": [32], "bc": "neumann"}},
  "params": {{"k": 0.0005, "N": 10, "mu_T": 0.1, "mu_I": 1, "mu_V": 1,
             "D_T": 0.01, "D_I": 0.01, "D_V": 0.01,
             "lambda": {{"family": "constant", "value": 10}}}},
  "init": {{"T": {{"kind": "constant", "value": 150}},
           "I": {{"kind": "bump", "base": 0.5, "amplitude": 1, "center": [0.3], "width": 0.1}},
           "V": {{"kind": "constant", "value": 2}}}},
  "stepper": {{"scheme": "imex_be", "dt": 0.01, "t_end": {t_end}, "snapshot_every": {snapshot_every}}},
  "sweep": {{"axis": "k", "values": [0.0005, 0.0009, 0.01], "experiment": "classify"}}
}}"#
    )
}

fn unstable_config() -> String {
    stable_config(20.0, 100)
        .replace("\"k\": 0.0005", "\"k\": 0.004")
        .replace("\"value\": 150", "\"value\": 100")
}

fn run(dir: &Path, sub: &str, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join(format!("{sub}.json"));
    fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    Command::new(BIN)
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--output")
        .arg(&out)
        .arg("--quiet")
        .args(extra)
        .output()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn snapshots(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("snap_"))
        .collect();
    names.sort();
    names
}

#[test]
fn simulate_writes_one_file_per_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), "simulate", &stable_config(1.0, 10), &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let dir = tmp.path().join("out");
    let snaps = snapshots(&dir);
    assert_eq!(snaps.len(), 11);
    assert_eq!(snaps[0], "snap_000000.csv");
    assert_eq!(snaps[10], "snap_000100.csv");
    let body = fs::read_to_string(dir.join(&snaps[3])).unwrap();
    assert!(body.starts_with("node_index,x,T,I,V\n"));
    assert_eq!(body.lines().count(), 33);
    let times = fs::read_to_string(dir.join("times.csv")).unwrap();
    assert!(times.starts_with("step,time\n0,0\n10,0.1"));
    let summary = json(&dir.join("summary.json"));
    assert_eq!(summary["result"]["monitors"]["passed"], true);
    assert_eq!(summary["params"]["mu_T"], 0.1);
    assert!(summary["metadata"]["wall_clock_seconds"].is_number());
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        assert_eq!(
            run(dir.path(), "simulate", &stable_config(2.0, 50), &[])
                .status
                .code(),
            Some(0)
        );
        assert_eq!(
            run(
                dir.path(),
                "steady",
                &stable_config(2.0, 50),
                &["--seed", "11"]
            )
            .status
            .code(),
            Some(0)
        );
    }
    let (da, db) = (a.path().join("out"), b.path().join("out"));
    let mut names: Vec<_> = fs::read_dir(&da)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    let mut compared = 0;
    for name in names {
        let n = name.to_str().unwrap();
        if n.ends_with(".csv") || n == "steady.json" {
            assert_eq!(
                fs::read(da.join(n)).unwrap(),
                fs::read(db.join(n)).unwrap(),
                "{n}"
            );
            compared += 1;
        }
    }
    assert!(compared > 5);
}

#[test]
fn classify_reports_corollary_stability() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), "classify", &stable_config(1.0, 10), &[]);
    assert_eq!(out.status.code(), Some(0));
    let s = json(&tmp.path().join("out/summary.json"));
    assert_eq!(
        s["result"]["classification"],
        "globally_stable_by_corollary"
    );
    assert!((s["result"]["corollary_bound"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!(s["result"]["eta0"].as_f64().unwrap() < 0.0);
    assert!(s["result"]["R0_sup"].is_number());
}

#[test]
fn verify_passes_on_stable_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = stable_config(80.0, 200);
    assert_eq!(
        run(tmp.path(), "simulate", &cfg, &[]).status.code(),
        Some(0)
    );
    let out = run(tmp.path(), "verify", &cfg, &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = json(&tmp.path().join("out/verify.json"));
    assert_eq!(
        report["t_convergence"]["report"]["violations"]
            .as_array()
            .unwrap()
            .len(),
        0
    );
    assert_eq!(report["iv_decay"]["decayed"], true);
}

#[test]
fn verify_flags_target_dip_in_unstable_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = unstable_config();
    assert_eq!(
        run(tmp.path(), "simulate", &cfg, &[]).status.code(),
        Some(0)
    );
    let out = run(tmp.path(), "verify", &cfg, &[]);
    assert_eq!(out.status.code(), Some(4));
    let record: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"], "verification");
    let report = json(&tmp.path().join("out/verify.json"));
    assert_eq!(report["stability"]["classification"], "unstable");
    assert_eq!(report["t_convergence"]["upper_passed"], true);
    assert!(!report["t_convergence"]["report"]["violations"]
        .as_array()
        .unwrap()
        .is_empty());
}

#[test]
fn verify_without_simulation_output_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), "verify", &stable_config(1.0, 10), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_errors_exit_two_with_record() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = stable_config(1.0, 10).replace("\"mu_T\": 0.1", "\"mu_T\": -0.1");
    let out = run(tmp.path(), "simulate", &bad, &[]);
    assert_eq!(out.status.code(), Some(2));
    let record: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"], "config");
    assert!(record["message"].as_str().unwrap().contains("mu_T"));

    let out = run(tmp.path(), "simulate", "{ not json", &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn explicit_cfl_violation_is_a_solver_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = stable_config(1.0, 10)
        .replace("\"imex_be\"", "\"explicit\"")
        .replace("\"D_V\": 0.01", "\"D_V\": 100");
    let out = run(tmp.path(), "simulate", &cfg, &[]);
    assert_eq!(out.status.code(), Some(3));
    let record: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"], "solver");
}

#[test]
fn analysis_subcommands_write_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = stable_config(1.0, 10);
    for sub in ["steady", "spectrum", "nondim", "sweep"] {
        let out = run(tmp.path(), sub, &cfg, &[]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{sub}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let dir = tmp.path().join("out");
    for file in [
        "steady.csv",
        "steady.json",
        "eigenvector.csv",
        "spectrum.json",
        "q.csv",
        "sweep.csv",
        "sweep.json",
    ] {
        assert!(dir.join(file).exists(), "{file}");
    }
    let sweep = fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let classes: Vec<&str> = sweep
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(5).unwrap())
        .collect();
    assert_eq!(
        classes,
        [
            "globally_stable_by_corollary",
            "globally_stable_by_corollary",
            "unstable"
        ]
    );
    let steady = json(&dir.join("steady.json"));
    assert!(steady["clearance_residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn library_entry_point_matches_binary_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let config = parse_config(&stable_config(1.0, 10)).unwrap();
    assert_eq!(parse_config(&config.to_json()).unwrap(), config);
    let opts = RunOptions {
        output: Some(tmp.path().to_path_buf()),
        quiet: true,
        seed: 0,
    };
    let summary = run_subcommand(Sub::Classify, &config, &opts).unwrap();
    assert_eq!(
        summary.result["classification"],
        "globally_stable_by_corollary"
    );
}
