use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sma-voids"));
    c.env_remove("SMA_VOIDS_OUT");
    c
}

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_cmd(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn check_passes_and_reports_counts() {
    let o = run_cmd(&["check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("6/6 properties passed"));
}

#[test]
fn invalid_beta_exits_one_citing_the_constraint() {
    let o = run_cmd(&["run", p(&scenarios().join("invalid/overfull_beta.toml"))]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("initial.beta[node 0"), "{e}");
    assert!(e.contains("= 1.2 > 1"), "{e}");
}

#[test]
fn positive_tau_bar_exits_one() {
    let o = run_cmd(&["run", p(&scenarios().join("invalid/positive_tau_bar.toml"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("material.tau_bar"));
}

#[test]
fn negative_theta_exits_one() {
    let o = run_cmd(&["run", p(&scenarios().join("invalid/negative_theta.toml"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("theta0 must be positive"));
}

#[test]
fn single_epsilon_sweep_is_rejected() {
    let o = run_cmd(&["sweep-epsilon", p(&scenarios().join("loaded.toml")), "--epsilons", "0.1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("at least 3 values spanning 2 decades required"));
}

#[test]
fn unknown_flag_prints_usage_and_exits_one() {
    let o = run_cmd(&["run", "x.toml", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn run_then_audit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("relax");
    let o = run_cmd(&["run", p(&scenarios().join("equilibrium.toml")), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("timeseries.csv").exists());
    assert!(out.join("scenario.toml").exists());
    let o = run_cmd(&["audit", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("0 violation(s)"));
    let audit = fs::read_to_string(out.join("audit.csv")).unwrap();
    assert_eq!(audit.lines().count(), 12);
}

#[test]
fn audit_requires_every_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("strided");
    let o = run_cmd(&["run", p(&scenarios().join("equilibrium.toml")), "--out", p(&out), "--stride", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let o = run_cmd(&["audit", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--stride 1"));
}

#[test]
fn solver_failure_exits_two_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenarios().join("loaded.toml"))
        .unwrap()
        .replace("epsilon = 0.01", "epsilon = 0.01\nfp_max_iter = 2\nmax_halvings = 0");
    let sc = dir.path().join("fragile.toml");
    fs::write(&sc, text).unwrap();
    let out = dir.path().join("out");
    let o = run_cmd(&["run", p(&sc), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let report = fs::read_to_string(out.join("failure.txt")).unwrap();
    assert!(report.contains("fixed-point iteration did not converge"));
    assert!(report.contains("accepted_steps = 0"));
    assert!(out.join("snapshots/snapshot_000000.csv").exists());
}

#[test]
fn sweep_writes_table_and_member_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = run_cmd(&[
        "sweep-epsilon",
        p(&scenarios().join("equilibrium.toml")),
        "--epsilons",
        "0.1,0.01,0.001",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().filter(|l| !l.starts_with('#')).count(), 4);
    for k in 0..3 {
        assert!(out.join(format!("eps_{k}/scenario.toml")).exists());
    }
}

#[test]
fn depend_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dep");
    let o = run_cmd(&[
        "depend",
        p(&scenarios().join("dependence.toml")),
        "--deltas",
        "0,0.01",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = fs::read_to_string(out.join("depend.csv")).unwrap();
    assert!(table.lines().nth(1).unwrap().starts_with("0.0000000000000000e0,0.0000000000000000e0"));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("env_out");
    let o = bin()
        .args(["run", p(&scenarios().join("equilibrium.toml"))])
        .env("SMA_VOIDS_OUT", &out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(out.join("timeseries.csv").exists());
}
