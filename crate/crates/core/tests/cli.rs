//! The `risbench` binary: subcommands, exit codes and the published run-record schema.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn risbench(args: &[&str], cache: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_risbench"))
        .args(args)
        .env("RISBENCH_CACHE_DIR", cache)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("cfg.json");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = r#"{
  "surface_ref": "S4", "M": 6, "N": 6,
  "grid": {"theta_step_deg": 3, "phi_step_deg": 3},
  "ga": {"population": 6, "generations": 4},
  "reference": {"M": 6, "N": 6}
}"#;

fn schema() -> jsonschema::JSONSchema {
    let text = include_str!("../schemas/run_record.schema.json");
    jsonschema::JSONSchema::compile(&serde_json::from_str(text).unwrap()).expect("schema compiles")
}

#[test]
fn optimize_record_matches_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let o = risbench(
        &["optimize", "--config", &cfg, "--seed", "7", "--threads", "1", "--out", out_dir.to_str().unwrap()],
        &dir.path().join("cache"),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let record: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("run_record.json")).unwrap()).unwrap();
    let s = schema();
    if let Err(errors) = s.validate(&record) {
        panic!("{:?}", errors.map(|e| e.to_string()).collect::<Vec<_>>());
    }
    assert_eq!(record["seed"], 7);
    assert_eq!(record["config"]["ga"]["seed"], 7);
    for (_, p) in record["artifacts"].as_object().unwrap() {
        assert!(Path::new(p.as_str().unwrap()).exists());
    }
    let mut broken = record.clone();
    broken["metrics"]["nmse"] = serde_json::json!(-1.0);
    assert!(!s.is_valid(&broken));
}

#[test]
fn simulate_record_matches_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("sim");
    let o = risbench(&["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap()], &dir.path().join("cache"));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let record: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(schema().is_valid(&record));
    assert!(record["metrics"].is_null());
}

#[test]
fn evaluate_self_and_via_benchmark_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let cfg = write_config(dir.path(), SMALL);
    let sim = dir.path().join("sim");
    assert!(risbench(&["simulate", "--config", &cfg, "--out", sim.to_str().unwrap()], &cache).status.success());
    let pattern = sim.join("pattern.csv");
    let p = pattern.to_str().unwrap();

    let o = risbench(&["evaluate", "--config", &cfg, "--achieved", p, "--reference", p], &cache);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(m["de"], 0.0);
    assert_eq!(m["nmse"], 0.0);

    let first = risbench(&["evaluate", "--config", &cfg, "--achieved", p, "--benchmark", "B3"], &cache);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let cached: Vec<_> = fs::read_dir(cache.join("ref")).unwrap().collect();
    assert_eq!(cached.len(), 2);
    let second = risbench(&["evaluate", "--config", &cfg, "--achieved", p, "--benchmark", "B3"], &cache);
    assert_eq!(first.stdout, second.stdout);
    let m: serde_json::Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_eq!(m["per_beam_slr_db"].as_array().unwrap().len(), 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let code = |o: Output| o.status.code().unwrap();

    let missing = risbench(&["simulate", "--config", "/nonexistent/run.json"], &cache);
    assert_eq!(code(missing), 2);

    let bad_surface = write_config(dir.path(), r#"{"surface_ref": "/nonexistent/cell.json"}"#);
    let o = risbench(&["simulate", "--config", &bad_surface], &cache);
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/cell.json"));
    assert_eq!(code(o), 2);

    // grids of different steps
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    assert!(risbench(&["simulate", "--config", &cfg, "--out", a.to_str().unwrap()], &cache).status.success());
    let fine = write_config(dir.path(), &SMALL.replace("\"theta_step_deg\": 3, \"phi_step_deg\": 3", "\"theta_step_deg\": 5, \"phi_step_deg\": 5"));
    let b = dir.path().join("b");
    assert!(risbench(&["simulate", "--config", &fine, "--out", b.to_str().unwrap()], &cache).status.success());
    let o = risbench(
        &[
            "evaluate",
            "--config",
            &cfg,
            "--achieved",
            a.join("pattern.csv").to_str().unwrap(),
            "--reference",
            b.join("pattern.csv").to_str().unwrap(),
        ],
        &cache,
    );
    assert_eq!(code(o), 3);

    let o = risbench(&["evaluate", "--config", &cfg, "--achieved", dir.path().join("none.csv").to_str().unwrap()], &cache);
    assert_eq!(code(o), 4);

    // output directory that cannot be created (a regular file is in the way)
    fs::write(dir.path().join("blocker"), "x").unwrap();
    let o = risbench(&["simulate", "--config", &cfg, "--out", dir.path().join("blocker/sub").to_str().unwrap()], &cache);
    assert_eq!(code(o), 4);
}

#[test]
fn table1_text_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = risbench(&["table1"], dir.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.lines().nth(1).unwrap().starts_with("S1"));
    assert!(text.contains("43.87") && text.contains("12.82"));

    let o = risbench(&["table1", "--json"], dir.path());
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let s3 = rows.as_array().unwrap().iter().find(|r| r["cell_id"] == "S3").unwrap();
    assert!((s3["total_power_w"].as_f64().unwrap() - 64.0).abs() < 1e-9);
    let s5 = rows.as_array().unwrap().iter().find(|r| r["cell_id"] == "S5").unwrap();
    assert!((s5["power_per_area_w_m2"].as_f64().unwrap() - 12.8).abs() / 12.8 < 0.02);
}
