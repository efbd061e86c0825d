use std::path::Path;
use std::process::Command;

use bubblecdf::config::RunConfig;
use bubblecdf::data;
use bubblecdf::formats::{self, ModelKind};
use bubblecdf_core::arm::ArmModel;
use bubblecdf_core::neural::{MlpArch, MlpModel};
use bubblecdf_core::oracle::{build_selfcollision_db, ContactDbParams};
use serde_json::json;

fn small_db_params() -> ContactDbParams {
    ContactDbParams { grid_res: 12, cfg_res: 48, max_entries: 40, ..ContactDbParams::default() }
}

#[test]
fn contact_db_round_trip_and_arm_check() {
    let arm = ArmModel::planar(&[2.0, 2.0]).unwrap();
    let db = data::build_contact_db(&arm, &small_db_params()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("db.json");
    formats::save_contact_db(&path, &db, &arm).unwrap();
    assert_eq!(formats::load_contact_db(&path, &arm).unwrap(), db);

    let other = ArmModel::planar(&[2.0, 1.5]).unwrap();
    assert!(formats::load_contact_db(&path, &other).is_err());
    // Wrong format tag.
    assert!(formats::load_sc_db(&path, &arm).is_err());
}

#[test]
fn truncated_contact_db_is_rejected() {
    let arm = ArmModel::planar(&[2.0, 2.0]).unwrap();
    let db = data::build_contact_db(&arm, &small_db_params()).unwrap();
    let mut env = serde_json::to_value(formats::contact_db_envelope(&db, &arm)).unwrap();
    env["body"]["links"].as_array_mut().unwrap().pop();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("db.json");
    std::fs::write(&path, env.to_string()).unwrap();
    assert!(formats::load_contact_db(&path, &arm).is_err());

    env["body"]["links"] = serde_json::to_value(&db.links).unwrap();
    env["version"] = json!(formats::FORMAT_VERSION + 1);
    std::fs::write(&path, env.to_string()).unwrap();
    assert!(formats::load_contact_db(&path, &arm).is_err());
}

#[test]
fn sc_db_and_weights_round_trip() {
    let arm = ArmModel::planar(&[2.0, 2.0]).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let sc = build_selfcollision_db(&arm, 5000, 0.02, 9).unwrap();
    let path = dir.path().join("sc.json");
    formats::save_sc_db(&path, &sc, &arm).unwrap();
    assert_eq!(formats::load_sc_db(&path, &arm).unwrap(), sc);

    let model = MlpModel::new(MlpArch { width: 8, n_hidden: 3, ..MlpArch::default() }, 4).unwrap();
    let path = dir.path().join("w.json");
    formats::save_weights(&path, &model, ModelKind::Env, &arm).unwrap();
    assert_eq!(formats::load_weights(&path, ModelKind::Env, &arm).unwrap(), model);
    assert!(formats::load_weights(&path, ModelKind::Sc, &arm).is_err());
}

#[test]
fn partial_config_keeps_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    std::fs::write(&path, r#"{"seed": 3, "bench": {"n_scenarios": 7}, "oracle_db": {"grid_res": 50}}"#).unwrap();
    let cfg = RunConfig::load(&path).unwrap();
    let def = RunConfig::default();
    assert_eq!(cfg.seed, 3);
    assert_eq!(cfg.bench.n_scenarios, 7);
    assert_eq!(cfg.bench.controllers, def.bench.controllers);
    assert_eq!(cfg.oracle_db.grid_res, 50);
    assert_eq!(cfg.oracle_db.cfg_res, def.oracle_db.cfg_res);
    assert_eq!(cfg.arm, def.arm);

    std::fs::write(&path, r#"{"seed": "three"}"#).unwrap();
    assert!(RunConfig::load(&path).is_err());
}

fn cli(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_bubblecdf"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(["--config", "run.json", "--out", "out"])
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn cli_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let small = json!({ "grid_res": 30, "cfg_res": 96, "max_entries": 60 });
    let cfg = json!({
        "contact_db": small,
        "oracle_db": small,
        "sc_db": { "n_samples": 20000 },
        "bench": { "n_scenarios": 2, "planners": ["bubble"], "controllers": ["cbf"], "run_dynamic": false },
    });
    std::fs::write(dir.path().join("run.json"), cfg.to_string()).unwrap();

    let o = cli(dir.path(), &["gen-data"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("data/contact_db.json").exists());
    assert!(dir.path().join("data/sc_db.json").exists());

    let o = cli(dir.path(), &["--oracle", "--mode", "rrt", "--seed", "2", "plan"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["plan.json", "plot.json", "results.csv"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
    let plot: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/plot.json")).unwrap()).unwrap();
    assert!(plot.is_object());

    let o = cli(dir.path(), &["--oracle", "--mode", "pd", "simulate"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let steps = std::fs::read_to_string(dir.path().join("out/steps.csv")).unwrap();
    assert!(steps.lines().count() > 2);

    let o = cli(dir.path(), &["--oracle", "bench"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["planner_results.csv", "planner_summary.csv", "controller_results.csv", "controller_summary.csv"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }

    assert!(!cli(dir.path(), &["--mode", "bogus", "plan"]).status.success());
    assert!(!cli(dir.path(), &["--mode", "bogus", "bench"]).status.success());
    // No trained weights in this directory.
    assert!(!cli(dir.path(), &["plan"]).status.success());
}
