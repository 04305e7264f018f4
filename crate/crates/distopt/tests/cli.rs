use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use distopt::manifest::RunManifest;
use serde_json::Value;

fn distopt(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_distopt"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    distopt(&args, &[])
}

fn error_record(out: &Output) -> Value {
    let line = String::from_utf8_lossy(&out.stderr);
    let v: Value = serde_json::from_str(line.trim()).expect("stderr is one JSON record");
    v["error"].clone()
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

const DESK: &str = r#""mesh": {"nx": 20, "ny": 10}, "build": {"layers": 10}"#;

#[test]
fn one_iteration_writes_history_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, format!(r#"{{"problem": "cantilever", {DESK}, "optimizer": {{"max_iterations": 1}}}}"#)).unwrap();
    let out = dir.path().join("out");
    let o = run("optimize", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("history.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], 0.0);
    for f in ["snapshot_0000.vtk", "snapshot_0000.pgm", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let m = RunManifest::read(&out).unwrap();
    assert_eq!(m.command, "optimize");
    assert_eq!(m.termination, "max_iterations");
    assert_eq!(m.run_id.len(), 64);
    for f in &m.outputs {
        assert!(out.join(f).is_file(), "{f} listed but missing");
    }
}

#[test]
fn snapshot_period_from_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, format!(r#"{{"problem": "mbb", "mesh": {{"nx": 12, "ny": 4}}, "build": {{"layers": 4}}, "optimizer": {{"max_iterations": 5}}}}"#)).unwrap();
    let out = dir.path().join("out");
    assert!(run("optimize", &cfg, &out, &["--snapshot-every", "2"]).status.success());
    let m = RunManifest::read(&out).unwrap();
    let vtk: Vec<&String> = m.outputs.iter().filter(|f| f.ends_with(".vtk")).collect();
    assert_eq!(vtk, ["snapshot_0000.vtk", "snapshot_0002.vtk", "snapshot_0004.vtk"]);
}

#[test]
fn manifest_echo_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(
        &cfg,
        format!(r#"{{"problem": "cantilever", {DESK}, "optimizer": {{"max_iterations": 4}}, "output": {{"record_wall_time": false}}}}"#),
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run("optimize", &cfg, &a, &[]).status.success());
    let echo = dir.path().join("echo.json");
    fs::write(&echo, serde_json::to_string_pretty(&RunManifest::read(&a).unwrap().config).unwrap()).unwrap();
    assert!(run("optimize", &echo, &b, &[]).status.success());
    assert_eq!(fs::read(a.join("history.csv")).unwrap(), fs::read(b.join("history.csv")).unwrap());
    assert_eq!(fs::read(a.join("snapshot_0003.vtk")).unwrap(), fs::read(b.join("snapshot_0003.vtk")).unwrap());
    let (ma, mb) = (RunManifest::read(&a).unwrap(), RunManifest::read(&b).unwrap());
    assert_eq!(ma.config, mb.config);
    assert_eq!(ma.run_id, mb.run_id);
}

#[test]
fn build_then_identify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    let body = r#""problem": "cantilever", "mesh": {"nx": 20, "ny": 10},
        "build": {"layers": 10, "eigenstrain": {"ex": -0.25, "ey": 0}}"#;
    fs::write(&cfg, format!("{{{body}}}")).unwrap();
    let built = dir.path().join("built");
    let o = run("build-sim", &cfg, &built, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["build.vtk", "profile.csv", "springback_profile.csv", "manifest.json"] {
        assert!(built.join(f).is_file());
    }
    assert_eq!(csv_rows(&built.join("profile.csv")).len(), 21);

    let id_cfg = dir.path().join("id.json");
    fs::write(
        &id_cfg,
        format!(r#"{{{body}, "identify": {{"profile": "built/springback_profile.csv"}}}}"#),
    )
    .unwrap();
    let fit = dir.path().join("fit");
    let o = run("identify", &id_cfg, &fit, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&fit.join("identification.csv"));
    assert!((rows[0][0] + 0.25).abs() <= 1e-10 * 0.25, "{}", rows[0][0]);
    assert!(rows[0][1] <= 1e-10);
}

#[test]
fn sweep_reduces_distortion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(
        &cfg,
        r#"{"problem": "cantilever", "mesh": {"nx": 40, "ny": 20}, "build": {"layers": 20}, "sweep": {"gammas": [0, 0.2]}}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = run("sweep-gamma", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "gamma,F_MC,F_AM");
    let rows = csv_rows(&out.join("summary.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0][0], rows[1][0]), (0.0, 0.2));
    assert!(rows[1][2] <= rows[0][2], "F_AM {} > {}", rows[1][2], rows[0][2]);
    for f in RunManifest::read(&out).unwrap().outputs {
        assert!(out.join(&f).is_file(), "{f}");
    }
}

#[test]
fn config_errors_exit_2_with_a_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"problem": "cantilever", "material": {"poisson_ratio": 0.7}, "mesh": {"ny": 49}}"#).unwrap();
    let o = run("optimize", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let e = error_record(&o);
    assert_eq!(e["kind"], "config");
    let fields: Vec<&str> = e["issues"].as_array().unwrap().iter().map(|i| i["field"].as_str().unwrap()).collect();
    assert_eq!(fields, ["mesh.ny, build.layers", "material.poisson_ratio"]);

    fs::write(&cfg, r#"{"problem": "cantilever", "optimizer": {"gama": 0.3}}"#).unwrap();
    let o = run("optimize", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_record(&o)["message"].as_str().unwrap().contains("gama"));

    fs::write(&cfg, r#"{"problem": "cantilever"}"#).unwrap();
    let o = run("identify", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["issues"][0]["field"], "identify.profile");

    let o = distopt(
        &["optimize", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()],
        &[("DISTOPT_THREADS", "zero")],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn io_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("optimize", &dir.path().join("missing.json"), &dir.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_record(&o)["kind"], "io");

    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"problem": "cantilever"}"#).unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = run("build-sim", &cfg, &blocker.join("sub"), &[]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn solver_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    // A fixture on one corner node leaves the rotation free.
    fs::write(
        &cfg,
        format!(r#"{{"problem": "cantilever", {DESK}, "identify": {{"fixture": {{"x0": 0.0, "x1": 0.0}}}}}}"#),
    )
    .unwrap();
    let o = run("build-sim", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(error_record(&o)["kind"], "solver");
}
