use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sphere-sync"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &Value) -> String {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(body).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

fn ring_config(n: usize) -> Value {
    serde_json::json!({
        "schema": "sphere-sync/run/1",
        "d": 3,
        "n": n,
        "kappa_d": 1.0,
        "t_max": 3000.0,
        "initial": { "random": { "seed": 4 } },
        "output": { "trajectory": "traj.csv", "summary": "summary.json", "final_state": "final.json" }
    })
}

#[test]
fn too_few_nodes_is_rejected() {
    let dir = TempDir::new().unwrap();
    let mut cfg = ring_config(3);
    cfg["n"] = 2.into();
    let path = write_config(dir.path(), "bad.json", &cfg);
    let out = run(&["simulate", &path], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn missing_config_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let out = run(&["simulate", "nowhere.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_writes_outputs_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "ring.json", &ring_config(8));
    let first = run(&["simulate", &path], dir.path());
    assert!(
        first.status.success(),
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    let traj = std::fs::read(dir.path().join("traj.csv")).unwrap();
    let summary = std::fs::read(dir.path().join("summary.json")).unwrap();
    let state = std::fs::read(dir.path().join("final.json")).unwrap();

    let again = run(&["simulate", &path], dir.path());
    assert!(again.status.success());
    assert_eq!(first.stdout, again.stdout);
    assert_eq!(traj, std::fs::read(dir.path().join("traj.csv")).unwrap());
    assert_eq!(
        summary,
        std::fs::read(dir.path().join("summary.json")).unwrap()
    );
    assert_eq!(state, std::fs::read(dir.path().join("final.json")).unwrap());

    let report: Value = serde_json::from_slice(&summary).unwrap();
    assert_eq!(report["classification"], "ring_equispaced");
    let r = report["r_inf_measured"].as_f64().unwrap();
    assert!((r - 1.0 / 3f64.sqrt()).abs() < 1e-6);
    let csv = String::from_utf8(traj).unwrap();
    assert!(csv.starts_with("t,r,V_pair,V_dbody,max_speed"));
}

#[test]
fn sample_count_sets_the_row_count() {
    let dir = TempDir::new().unwrap();
    let mut cfg = ring_config(5);
    // 20 steps at stride 10 give samples at steps 0, 10 and 20
    cfg["dt"] = 0.01.into();
    cfg["t_max"] = 0.2.into();
    cfg["steady_tol"] = 0.0.into();
    cfg["sample_stride"] = 10.into();
    let path = write_config(dir.path(), "short.json", &cfg);
    let out = run(
        &["simulate", &path, "--trajectory", "short.csv"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("short.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn verify_passes() {
    let dir = TempDir::new().unwrap();
    let out = run(&["verify"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("PASS")));
    assert!(!text.lines().any(|l| l.starts_with("FAIL")));
}

#[test]
fn sweep_emits_one_row_per_point() {
    let dir = TempDir::new().unwrap();
    let out = run(
        &[
            "sweep", "--d", "3", "--n", "8", "--from", "0", "--to", "0.2", "--step", "0.1",
            "--t-max", "500",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("kappa2,ratio,r_inf,r_predicted,classification,converged,final_time")
    );
    assert_eq!(lines.count(), 3);
}

#[test]
fn align_and_hopf_round_trip_state_files() {
    let dir = TempDir::new().unwrap();
    let mut cfg = ring_config(8);
    cfg["d"] = 4.into();
    let path = write_config(dir.path(), "torus.json", &cfg);
    assert!(run(&["simulate", &path], dir.path()).status.success());

    let out = run(
        &["align", "final.json", "--output", "aligned.json"],
        dir.path(),
    );
    assert!(out.status.success());
    let aligned: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("aligned.json")).unwrap())
            .unwrap();
    let nodes = aligned["nodes"].as_array().unwrap();
    let avg: Vec<f64> = (0..4)
        .map(|k| nodes.iter().map(|x| x[k].as_f64().unwrap()).sum::<f64>() / nodes.len() as f64)
        .collect();
    assert!(avg[..3].iter().all(|c| c.abs() < 1e-12));

    let out = run(&["hopf", "final.json", "--align"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let image: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(image["d"], 3);
    for x in image["nodes"].as_array().unwrap() {
        assert!(x[2].as_f64().unwrap().abs() < 1e-6);
    }

    let out = run(&["hopf", &path], dir.path());
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn reduce_n3_reports_roots_and_samples() {
    let dir = TempDir::new().unwrap();
    let out = run(
        &["reduce-n3", "--t-max", "1", "--stride", "100", "--compare"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("roots"));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,u,x123,u_full,x123_full"));
    for line in lines {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert!((f[1] - f[3]).abs() < 1e-6 && (f[2] - f[4]).abs() < 1e-6);
    }
}
