use std::fs;
use std::path::Path;
use std::process::Command;

use nevlab_harness::{run, ExperimentConfig, Status};

const BIN: &str = env!("CARGO_BIN_EXE_nevlab");

fn config(checks: &[&str], extra: &str) -> String {
    let list: Vec<String> = checks.iter().map(|c| format!("{c:?}")).collect();
    format!(
        "seed = 11\nchecks = [{}]\n\n[model]\nm = 2\n\n[grid]\nmin = 1.0\nmax = 16.0\ncount = 5\n{extra}",
        list.join(", ")
    )
}

fn read(dir: &Path, file: &str) -> String {
    fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn list_checks_names_the_registry() {
    let out = Command::new(BIN).arg("list-checks").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["green_identity", "fmt_residual", "xi_closed_form", "est1", "est2", "exit_time", "dynkin", "defect"] {
        assert!(text.lines().any(|l| l.split_whitespace().next() == Some(name)), "{name} missing");
    }
}

#[test]
fn describe_prints_columns_and_rejects_unknown_names() {
    let out = Command::new(BIN).args(["describe", "green_identity"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("schema_version,r,level,G,g_r,residual"));
    assert!(text.contains("statement:"));
    let out = Command::new(BIN).args(["describe", "no_such_check"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, config(&["green_identity"], "\n[mc]\nn_paths = 0\n")).unwrap();
    let out = Command::new(BIN).arg("run").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mc.n_paths"));
}

#[test]
fn green_identity_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse(&config(&["green_identity"], "")).unwrap();
    let res = run(&cfg, Some(dir.path()), Some(1)).unwrap();
    assert_eq!(res.exit_code(), 0);
    assert_eq!(res.summary.checks[0].status, Status::Pass);
    let csv = read(dir.path(), "green_identity.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("schema_version,r,level,G,g_r,residual"));
    let mut n = 0;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[0], "1");
        let residual: f64 = cells[5].parse().unwrap();
        assert!(residual.abs() < 1e-8, "{line}");
        n += 1;
    }
    assert_eq!(n, 5);
    let summary: serde_json::Value = serde_json::from_str(&read(dir.path(), "summary.json")).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["all_passed"], true);
    assert_eq!(summary["checks"][0]["csv"], "green_identity.csv");
    let echoed = ExperimentConfig::parse(&read(dir.path(), "config.toml")).unwrap();
    assert_eq!(echoed, cfg);
}

#[test]
fn failing_check_sets_exit_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    fs::write(&path, config(&["green_identity", "sheet_symmetry"], "")).unwrap();
    let out = Command::new(BIN).arg("run").arg(&path).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let summary: serde_json::Value = serde_json::from_str(&read(&dir.path().join("o"), "summary.json")).unwrap();
    assert_eq!(summary["all_passed"], false);
    assert_eq!(summary["checks"][1]["status"], "error");
    assert_eq!(
        read(&dir.path().join("o"), "sheet_symmetry.csv"),
        "schema_version,quantity,index,value,reference,se,z\n"
    );
}

const DETERMINISM_CHECKS: &[&str] = &["green_identity", "xi_closed_form", "borel", "exit_time", "occupation_density"];
const SMALL_MC: &str = "\n[mc]\nn_paths = 400\nstep_factor = 1e-3\n";

fn artifacts(dir: &Path) -> Vec<(String, String)> {
    let mut files: Vec<String> = DETERMINISM_CHECKS.iter().map(|c| format!("{c}.csv")).collect();
    files.push("summary.json".into());
    files.push("config.toml".into());
    files.into_iter().map(|f| (f.clone(), read(dir, &f))).collect()
}

#[test]
fn artifacts_do_not_depend_on_thread_count() {
    let cfg = ExperimentConfig::parse(&config(DETERMINISM_CHECKS, SMALL_MC)).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    run(&cfg, Some(a.path()), Some(1)).unwrap();
    run(&cfg, Some(b.path()), Some(2)).unwrap();
    run(&cfg, Some(c.path()), Some(1)).unwrap();
    assert_eq!(artifacts(a.path()), artifacts(b.path()));
    assert_eq!(artifacts(a.path()), artifacts(c.path()));
}

#[test]
fn binary_honours_thread_variable() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    fs::write(&path, config(DETERMINISM_CHECKS, SMALL_MC)).unwrap();
    let mut outs = Vec::new();
    for threads in ["1", "3"] {
        let out_dir = dir.path().join(format!("t{threads}"));
        let st = Command::new(BIN)
            .env("NEVLAB_THREADS", threads)
            .arg("run")
            .arg(&path)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(st.status.code().is_some_and(|c| c <= 1));
        outs.push(artifacts(&out_dir));
    }
    assert_eq!(outs[0], outs[1]);
    let st = Command::new(BIN).env("NEVLAB_THREADS", "zero").arg("run").arg(&path).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
}

#[test]
fn seed_changes_monte_carlo_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse(&config(&["exit_time"], SMALL_MC)).unwrap();
    let other = ExperimentConfig { seed: 12, ..cfg.clone() };
    run(&cfg, Some(a.path()), Some(1)).unwrap();
    run(&other, Some(b.path()), Some(1)).unwrap();
    assert_ne!(read(a.path(), "exit_time.csv"), read(b.path(), "exit_time.csv"));
}
