use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn pickup_sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pickup-sim"))
        .args(args)
        .env_remove("PICKUP_SIM_OUT")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn digest(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

fn short_scenario(dir: &Path, name: &str, duration: f64) -> String {
    let shown = pickup_sim(&["show", "--scenario", name]);
    assert!(shown.status.success());
    let mut v: Value = serde_json::from_slice(&shown.stdout).unwrap();
    v["duration"] = duration.into();
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn list_prints_every_builtin() {
    let o = pickup_sim(&["list"]);
    assert!(o.status.success());
    let names: Vec<String> = String::from_utf8(o.stdout).unwrap().lines().map(str::to_string).collect();
    assert_eq!(names.len(), 6);
    for n in ["collision", "moving-pickup", "static-pickup", "fusion-eval", "detection-map", "full-arena"] {
        assert!(names.iter().any(|x| x == n), "{n} missing");
    }
}

#[test]
fn run_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = pickup_sim(&["run", "--scenario", "collision", "--seed", "7", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics: Value = serde_json::from_slice(&std::fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["seed"], 7);
    assert_eq!(metrics["agents"], 2);
    assert!(metrics["min_pairwise_distance"].as_f64().unwrap() >= 0.95);
    for f in ["poses.csv", "events.csv", "tracks.csv", "plans.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(String::from_utf8_lossy(&o.stdout).contains("collision"));
}

#[test]
fn quiet_run_prints_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let file = short_scenario(dir.path(), "static-pickup", 2.0);
    let o = pickup_sim(&["run", "--scenario", &file, "--quiet", "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
}

#[test]
fn identical_invocations_give_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let file = short_scenario(dir.path(), "full-arena", 20.0);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = pickup_sim(&["run", "--scenario", &file, "--seed", "3", "--quiet", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["metrics.json", "poses.csv", "tracks.csv", "events.csv"] {
        assert_eq!(digest(&a.join(f)), digest(&b.join(f)), "{f}");
    }
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let file = short_scenario(dir.path(), "collision", 1.0);
    let out = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_pickup-sim"))
        .args(["run", "--scenario", &file, "--quiet"])
        .env("PICKUP_SIM_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("metrics.json").exists());
}

#[test]
fn malformed_scenario_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let shown = pickup_sim(&["show", "--scenario", "collision"]);
    let mut v: Value = serde_json::from_slice(&shown.stdout).unwrap();
    v["dt"] = "fast".into();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, v.to_string()).unwrap();
    let o = pickup_sim(&["run", "--scenario", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dt"), "{}", stderr(&o));

    v["dt"] = (-0.1).into();
    std::fs::write(&path, v.to_string()).unwrap();
    let o = pickup_sim(&["validate", "--scenario", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dt"), "{}", stderr(&o));

    let o = pickup_sim(&["run", "--scenario", "no-such-scenario"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_with_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "not a directory").unwrap();
    let file = short_scenario(dir.path(), "collision", 1.0);
    let o = pickup_sim(&["run", "--scenario", &file, "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn validate_and_show_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["collision", "fusion-eval", "detection-map"] {
        let shown = pickup_sim(&["show", "--scenario", name]);
        let path = dir.path().join(format!("{name}.json"));
        std::fs::write(&path, &shown.stdout).unwrap();
        let o = pickup_sim(&["validate", "--scenario", path.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(pickup_sim(&["show", "--scenario", path.to_str().unwrap()]).stdout, shown.stdout);
    }
}

#[test]
fn detection_map_has_one_row_per_cell_and_altitude() {
    let dir = tempfile::tempdir().unwrap();
    let shown = pickup_sim(&["show", "--scenario", "detection-map"]);
    let mut v: Value = serde_json::from_slice(&shown.stdout).unwrap();
    v["grid"] = serde_json::json!([5, 3]);
    v["altitudes"] = serde_json::json!([6.0, 9.0]);
    v["repeats"] = 2.into();
    let path = dir.path().join("map.json");
    std::fs::write(&path, v.to_string()).unwrap();
    let out = dir.path().join("out");
    let o = pickup_sim(&["run", "--scenario", path.to_str().unwrap(), "--quiet", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("detection_map.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 * 3 * 2);
}
