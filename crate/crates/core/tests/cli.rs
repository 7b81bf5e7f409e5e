use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_manipulator-smc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn short_scenario(dir: &Path, pid: (f64, f64, f64), saturate: bool) -> String {
    let path = dir.join("short.toml");
    fs::write(
        &path,
        format!(
            r#"
name = "short"
model = "ur5e_like"
dt = 0.001
duration = 0.3
controller = "mbsmc"
saturate = {saturate}
rng_seed = 7

[trajectory]
kind = "waypoints"
profile = "nonic"
waypoints = [[0.0, -0.4, 0.3, -0.2, 0.3, 0.0], [0.05, -0.35, 0.25, -0.25, 0.35, 0.05]]
durations = [0.3]

[gains.mbsmc]
p1 = 100.0
p2 = 1.0
p3 = 60.0
boundary_layer = 0.1

[gains.nmbsmc]
p1 = 20.0
p2 = 1.0
p3 = 5.0

[gains.pid]
kp = {}
ki = {}
kd = {}
"#,
            pid.0, pid.1, pid.2
        ),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn validate_reports_success_and_failure() {
    let ok = cli(&["validate", "--model", "ur5e_like"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("6 joints"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[[joints]]\na = 0.1\nmass = -1.0\n").unwrap();
    let out = cli(&["validate", "--model", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn simulate_writes_log_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = short_scenario(dir.path(), (50.0, 1.0, 1.0), true);
    let out_dir = dir.path().join("run");
    let out = cli(&["simulate", "--scenario", &scenario, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let log = fs::read_to_string(out_dir.join("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 302);
    assert!(log.starts_with("t,q1,"));
    let table = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert!(table.contains("RMSE of joint motions"));
    assert!(out_dir.join("metrics.toml").exists());
}

#[test]
fn divergence_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = short_scenario(dir.path(), (1e8, 0.0, 1e6), false);
    let out_dir = dir.path().join("run");
    let out = cli(&[
        "simulate",
        "--scenario",
        &scenario,
        "--controller",
        "pid",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    // The truncated log is still written.
    assert!(out_dir.join("log.csv").exists());

    let out = cli(&["compare", "--scenario", &scenario, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let table = fs::read_to_string(out_dir.join("comparison.csv")).unwrap();
    assert!(table.contains("diverged"));
}

#[test]
fn compare_exports_table() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = short_scenario(dir.path(), (50.0, 1.0, 1.0), true);
    let out_dir = dir.path().join("cmp");
    let out = cli(&[
        "compare",
        "--scenario",
        &scenario,
        "--controllers",
        "mbsmc,pid",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let header = fs::read_to_string(out_dir.join("comparison.csv")).unwrap();
    assert!(header.starts_with("Metric,MBSMC theta1"));
    assert!(out_dir.join("log_mbsmc.csv").exists() && out_dir.join("log_pid.csv").exists());
}

#[test]
fn tune_writes_history_and_gains() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = short_scenario(dir.path(), (50.0, 1.0, 1.0), true);
    let out_dir = dir.path().join("tune");
    let args = [
        "tune",
        "--scenario",
        &scenario,
        "--controller",
        "pid",
        "--seed",
        "3",
        "--particles",
        "4",
        "--iterations",
        "2",
        "--out",
        out_dir.to_str().unwrap(),
    ];
    let out = cli(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let history = fs::read_to_string(out_dir.join("history.csv")).unwrap();
    assert!(history.starts_with("iteration,gbest_cost,kp,ki,kd"));
    assert_eq!(history.lines().count(), 4);
    let gains = fs::read_to_string(out_dir.join("gains.toml")).unwrap();
    assert!(gains.contains("[gains.pid]"));
    // Same seed, same answer.
    cli(&args);
    assert_eq!(gains, fs::read_to_string(out_dir.join("gains.toml")).unwrap());
}

#[test]
fn workspace_prints_volume() {
    let out = cli(&["workspace", "--model", "ur5e_like", "--samples", "20000", "--voxel", "0.05"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("volume = "));
    let out = cli(&["workspace", "--model", "ur5e_like", "--samples", "0"]);
    assert_eq!(out.status.code(), Some(1));
}
