use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bench(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lqt-bench"))
        .args(args)
        .env("LQT_BENCH_OUT", out)
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn without_wall_time(path: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("wall_time");
    v
}

const SMALL_SYSTEM: &str = r#"{
    "a": [[0.9, 0.2], [0.0, 0.7]],
    "b": [[0.0], [1.0]],
    "c": [[1.0, 0.0]],
    "reference": { "r0": [1.0] }
}"#;

fn small_config(dir: &Path) -> std::path::PathBuf {
    let sys = dir.join("system.json");
    fs::write(&sys, SMALL_SYSTEM).unwrap();
    let cfg = serde_json::json!({
        "system": sys,
        "steps": 200,
        "seed": 5,
        "observer": { "x0": 0.5, "xhat0": 0.0, "tau": 0.2 },
        "data": { "samples": 400, "x0": [0.5, -0.5] },
        "training": { "horizon": 2, "eps_rl": 1e-8, "max_iters": 3000 }
    });
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn model_based_summary_is_byte_stable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        ok(&bench(d.path(), &["model-based", "--steps", "150", "--seed", "2"]));
    }
    let sa = a.path().join("model-based/summary.json");
    let sb = b.path().join("model-based/summary.json");
    assert_eq!(without_wall_time(&sa), without_wall_time(&sb));
    let strip = |p: &Path| {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.contains("wall_time"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&sa), strip(&sb));
    assert_eq!(
        fs::read(a.path().join("model-based/trace.csv")).unwrap(),
        fs::read(b.path().join("model-based/trace.csv")).unwrap()
    );
}

#[test]
fn data_driven_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let ds = dir.path().join("data.csv");
    let kernel = dir.path().join("kernel.csv");
    ok(&bench(dir.path(), &["gen-data", "--config", cfg, "--dataset", ds.to_str().unwrap()]));
    assert!(ds.with_extension("json").exists());
    let header = fs::read_to_string(&ds).unwrap();
    assert!(header.starts_with("t,u1,y1\n"));

    ok(&bench(dir.path(), &["train", "--config", cfg, "--dataset", ds.to_str().unwrap(), "--kernel", kernel.to_str().unwrap()]));
    let meta: Value = serde_json::from_str(&fs::read_to_string(kernel.with_extension("json")).unwrap()).unwrap();
    assert_eq!(meta["d"], 6);
    assert_eq!(meta["N"], 2);
    assert_eq!(meta["training"]["converged"], true);

    ok(&bench(dir.path(), &["run-dd", "--config", cfg, "--kernel", kernel.to_str().unwrap()]));
    let s: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("run-dd/summary.json")).unwrap()).unwrap();
    assert_eq!(s["steps"], 200);

    // the one-shot pipeline on the same data gives the same closed loop
    let full = bench(dir.path(), &["data-driven", "--config", cfg]);
    ok(&full);
    let t1 = fs::read(dir.path().join("run-dd/trace.csv")).unwrap();
    let t2 = fs::read(dir.path().join("data-driven/trace.csv")).unwrap();
    assert_eq!(t1, t2);
}

#[test]
fn compare_reports_reductions() {
    let dir = tempfile::tempdir().unwrap();
    ok(&bench(dir.path(), &["model-based", "--steps", "300"]));
    let a = dir.path().join("a.json");
    fs::rename(dir.path().join("model-based/summary.json"), &a).unwrap();
    ok(&bench(dir.path(), &["model-based", "--steps", "300", "--weights", "observer-bo"]));
    let b = dir.path().join("model-based/summary.json");
    let o = bench(dir.path(), &["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    ok(&o);
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["index_reduction_pct"].as_f64().unwrap() > 0.0);

    let same = bench(dir.path(), &["compare", a.to_str().unwrap(), a.to_str().unwrap()]);
    let r: Value = serde_json::from_slice(&same.stdout).unwrap();
    assert_eq!(r["index_reduction_pct"].as_f64(), Some(0.0));
}

#[test]
fn mismatched_horizons_fail_in_compare() {
    let dir = tempfile::tempdir().unwrap();
    ok(&bench(dir.path(), &["model-based", "--steps", "10"]));
    let a = dir.path().join("a.json");
    fs::rename(dir.path().join("model-based/summary.json"), &a).unwrap();
    ok(&bench(dir.path(), &["model-based", "--steps", "20"]));
    let o = bench(dir.path(), &["compare", a.to_str().unwrap(), dir.path().join("model-based/summary.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(10));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[compare]"));
}

#[test]
fn bad_config_is_tagged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"gamma": "high"}"#).unwrap();
    let o = bench(dir.path(), &["model-based", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[config]"));

    let o = bench(dir.path(), &["model-based", "--weights", "data-driven-bo", "--config", small_config(dir.path()).to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn solver_failures_are_tagged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"observer": {"tau": -1.0}}"#).unwrap();
    let o = bench(dir.path(), &["model-based", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[solve]"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_kernel_is_a_persist_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bench(dir.path(), &["run-dd", "--kernel", dir.path().join("nope.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(9));
}

#[test]
fn empty_run() {
    let dir = tempfile::tempdir().unwrap();
    ok(&bench(dir.path(), &["model-based", "--steps", "0"]));
    let s: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("model-based/summary.json")).unwrap()).unwrap();
    assert_eq!(s["perf_index_1000"], 0.0);
    assert_eq!(s["final_outputs"].as_array().unwrap().len(), 0);
}
