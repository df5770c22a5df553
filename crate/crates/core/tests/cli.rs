mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quench-control"))
        .args(args)
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(k).unwrap().parse().unwrap())
        .collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_trivial_data_stays_at_rest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), common::TRIVIAL);
    for alpha in ["1", "1e-3", "0"] {
        let out = dir.path().join(format!("a{alpha}"));
        assert!(run(&["simulate", "--config", p(&cfg), "--alpha", alpha, "--out", p(&out)])
            .status
            .success());
        let csv = std::fs::read_to_string(out.join("fields.csv")).unwrap();
        assert!(column(&csv, "mu").iter().all(|&v| v == 0.0));
        assert!(column(&csv, "rho").iter().all(|&v| v == 0.5));
        assert!(column(&csv, "xi").iter().all(|&v| v == 0.0));
    }
}

#[test]
fn simulate_obstacle_sign_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let res = run(&["simulate", "--alpha", "0", "--out", p(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(out.join("fields.csv")).unwrap();
    let rho = column(&csv, "rho");
    let xi = column(&csv, "xi");
    assert!(rho.iter().zip(&xi).all(|(&r, &x)| common::sign_ok(r, x)));
    assert!(column(&csv, "mu").iter().all(|&m| m >= 0.0));
    let diag = json(&out.join("diagnostics.json"));
    assert_eq!(diag["state"]["sign_violation"], Value::Bool(false));
    assert!(diag["energy"]["max"].as_f64().unwrap() <= 0.05);
}

#[test]
fn optimize_writes_outputs_with_monotone_history() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let res = run(&["optimize", "--out", p(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for k in 0..5 {
        assert!(out.join(format!("control_{k}.csv")).exists());
    }
    assert!(out.join("control_final.csv").exists());
    let hist = std::fs::read_to_string(out.join("history.csv")).unwrap();
    let rows: Vec<(usize, f64)> = hist
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            assert!(w[1].1 <= w[0].1, "cost rose within level {}", w[0].0);
        }
    }
    let report = json(&out.join("limit_report.json"));
    assert_eq!(report["all_converged"], Value::Bool(true));
    for level in report["levels"].as_array().unwrap() {
        assert!(level["adjoint"]["pairing"].as_f64().unwrap() >= 0.0);
    }
    assert!(report["limit"]["pairing"].as_f64().unwrap() >= 0.0);
    let u = column(&std::fs::read_to_string(out.join("control_final.csv")).unwrap(), "u");
    assert!(u.iter().all(|&v| (0.0..=2.0).contains(&v)));
}

#[test]
fn optimize_without_tracking_returns_zero_control() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "beta1 = 0\nbeta2 = 0\ncontrol = constant:1.5\n");
    let out = dir.path().join("o");
    assert!(run(&["optimize", "--config", p(&cfg), "--out", p(&out)]).status.success());
    let u = column(&std::fs::read_to_string(out.join("control_final.csv")).unwrap(), "u");
    assert!(u.iter().all(|v| v.abs() <= 1e-8));
}

#[test]
fn sweep_reports_every_alpha_and_the_limit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w");
    assert!(run(&["sweep-alpha", "--alphas", "1e-1,1e-3,1e-5", "--out", p(&out)])
        .status
        .success());
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(column(&csv, "alpha"), vec![1e-1, 1e-3, 1e-5, 0.0]);
    let d = column(&csv, "rho_distance");
    assert!(d[0] > d[1] && d[1] > d[2] && d[3] == 0.0);
}

#[test]
fn verify_writes_report_next_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), common::TRIVIAL);
    let res = run(&["verify", "--config", p(&cfg), "--seed", "3"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stdout));
    let report = json(&dir.path().join("out").join("verify_report.json"));
    assert_eq!(report["passed"], Value::Bool(true));
    assert_eq!(report["seed"], Value::from(3));
}

#[test]
fn configuration_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let bad = [
        "beta1 = -1\n",
        "kernel_width = 0\n",
        "control = constant:-1\nu_max = constant:-1\n",
        "no_such_key = 1\n",
        "coefficient_floor = 0\n",
    ];
    for (k, text) in bad.iter().enumerate() {
        let cfg = dir.path().join(format!("bad{k}.cfg"));
        std::fs::write(&cfg, text).unwrap();
        let res = run(&["simulate", "--config", p(&cfg), "--alpha", "1e-2", "--out", p(&out)]);
        assert_eq!(res.status.code(), Some(2), "config {text:?}");
    }
    let res = run(&["simulate", "--alpha", "-1", "--out", p(&out)]);
    assert_eq!(res.status.code(), Some(2));
    let res = run(&["sweep-alpha", "--alphas", "2", "--out", p(&out)]);
    assert_eq!(res.status.code(), Some(2));
}
