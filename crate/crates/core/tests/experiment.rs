use std::fs;

use channel_motor::experiment::{
    emit_results, exit_code, run_config, ExperimentConfig, ExperimentKind, Format, LongRun,
};
use channel_motor::Error;
use serde::{Deserialize, Serialize};
use serde_json::Value;

fn config(kind: ExperimentKind, dir: &tempfile::TempDir) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(kind);
    c.out = Some(dir.path().join("run"));
    c
}

fn read_json(path: &std::path::Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn estimate_k_writes_documented_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(ExperimentKind::EstimateK, &dir);
    c.k.sample_length = 500.0;
    let out = run_config(&c).unwrap();
    let csv = fs::read_to_string(out.out_dir.join("results.csv")).unwrap();
    assert!(csv.starts_with("t,K,stderr\n"));
    let manifest = read_json(&out.out_dir.join("manifest.json"));
    assert_eq!(manifest["tool"], "chanmotor");
    assert_eq!(manifest["config"]["kind"], "estimate-K");
    // every default is echoed in resolved form
    assert!(manifest["config"]["k"]["t_max"].as_f64().unwrap() > 0.0);
    assert!(manifest["config"]["environment"]["seed"].is_u64());
    assert_eq!(read_json(&out.out_dir.join("summary.json")), out.summary);
}

#[test]
fn empty_records_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let none: Vec<(f64, f64)> = vec![];
    assert!(matches!(
        emit_results(&none, dir.path(), "x", Format::Csv),
        Err(Error::InsufficientSample(_))
    ));
}

#[derive(Serialize, Deserialize, PartialEq, Debug)]
struct Row {
    t: f64,
    value: f64,
}

#[test]
fn csv_and_json_carry_identical_values() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<Row> = (0..50)
        .map(|i| Row {
            t: i as f64 / 7.0,
            value: (i as f64).sqrt().exp(),
        })
        .collect();
    let csv_path = emit_results(&rows, dir.path(), "r", Format::Csv).unwrap();
    let json_path = emit_results(&rows, dir.path(), "r", Format::Json).unwrap();
    let from_csv: Vec<Row> = csv::Reader::from_path(csv_path)
        .unwrap()
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap();
    let from_json: Vec<Row> = serde_json::from_str(&fs::read_to_string(json_path).unwrap()).unwrap();
    assert_eq!(from_csv, rows);
    assert_eq!(from_json, rows);
}

#[test]
fn identical_configs_reproduce_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(ExperimentKind::GraphMc, &dir);
    c.walk.n_paths = 100;
    c.a = 2.0;
    let first = run_config(&c).unwrap().summary;
    let second = run_config(&c).unwrap().summary;
    assert_eq!(first, second);
    c.seed = 2;
    assert_ne!(run_config(&c).unwrap().summary["tau"], first["tau"]);
}

#[test]
fn unknown_kind_is_a_usage_error() {
    let err = ExperimentKind::from_name("warp-drive").unwrap_err();
    assert_eq!(exit_code(&err), 2);
    let err = ExperimentConfig::from_json(r#"{"kind": "warp-drive"}"#).unwrap_err();
    assert_eq!(exit_code(&err), 2);
    for k in ExperimentKind::ALL {
        assert_eq!(ExperimentKind::from_name(k.name()).unwrap(), k);
    }
}

#[test]
fn oracle_compare_reports_small_discrepancy() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(&config(ExperimentKind::OracleCompare, &dir)).unwrap();
    let max = out.summary["max_rel_diff"].as_f64().unwrap();
    assert!(max < 1e-3, "{max}");
    let csv = fs::read_to_string(out.out_dir.join("results.csv")).unwrap();
    assert!(csv.starts_with("shape,quadrature,bvp,rel_diff\n"));
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn speed_of_bernoulli_environment_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(ExperimentKind::Speed, &dir);
    c.long_run = Some(LongRun {
        a: 20.0,
        n_paths: 20,
        dt: 1e-3,
    });
    let out = run_config(&c).unwrap();
    let s = &out.summary;
    let target = 17.0 / 16.0 - (-2.0f64).exp() / 16.0;
    let inv = s["inverse_speed"].as_f64().unwrap();
    let se = s["stderr"].as_f64().unwrap();
    assert!((inv - target).abs() < 3.0 * se + 1e-6, "{inv} +- {se}");
    assert_eq!(s["wing_contribution"].as_f64().unwrap(), 0.0);
    let long = s["long_run_tau_over_a"]["mean"].as_f64().unwrap();
    assert!((long - target).abs() < 0.15, "{long}");
}

#[test]
fn eps_sweep_and_validation_run_on_the_default_channel() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(&config(ExperimentKind::ValidateGeometry, &dir)).unwrap();
    assert_eq!(out.summary["all_passed"], true);

    let dir = tempfile::tempdir().unwrap();
    let mut c = config(ExperimentKind::EpsSweep, &dir);
    c.a = 3.0;
    c.sde.epsilons = vec![0.4, 0.2];
    c.sde.n_paths = 50;
    c.walk.n_paths = 50;
    let out = run_config(&c).unwrap();
    let csv = fs::read_to_string(out.out_dir.join("results.csv")).unwrap();
    assert!(csv.starts_with("epsilon,mean_sigma,stderr,graph_ref,graph_ref_stderr,analytic_ref,ks\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn numeric_faults_leave_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(ExperimentKind::GraphMc, &dir);
    c.walk.max_time = Some(0.01);
    c.walk.n_paths = 4;
    let err = run_config(&c).unwrap_err();
    assert_eq!(exit_code(&err), 3);
    assert!(dir.path().join("run/diagnostics.json").exists());
}

#[test]
fn env_seed_overrides_the_config() {
    // the only test touching this variable
    let mut c = ExperimentConfig::new(ExperimentKind::Speed);
    std::env::set_var(channel_motor::experiment::SEED_ENV, "41");
    c.apply_env_seed().unwrap();
    std::env::set_var(channel_motor::experiment::SEED_ENV, "not-a-number");
    let bad = c.clone().apply_env_seed();
    std::env::remove_var(channel_motor::experiment::SEED_ENV);
    assert_eq!(c.seed, 41);
    assert!(matches!(bad, Err(Error::Config(_))));
}
