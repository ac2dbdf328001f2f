use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn impedscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_impedscope")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const COHORT: &str = r#""cohort": {
    "classes": [
      { "pathology": "healthy", "n_patients": 4, "tissue": { "r0": 1200.0, "r_inf": 300.0, "fc": 8000.0, "alpha": 0.8 } },
      { "pathology": "oscc", "n_patients": 4, "tissue": { "r0": 900.0, "r_inf": 250.0, "fc": 15000.0, "alpha": 0.75 } }
    ],
    "samples_per_patient": 2
  }"#;

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(
        &path,
        format!(r#"{{ "geometry": "compact", "dataset": "data", "n_folds": 4, {extra}{COHORT} }}"#),
    )
    .unwrap();
    path
}

#[test]
fn masks_validate_succeeds_on_shipped_registry() {
    let tmp = tempfile::tempdir().unwrap();
    let out = impedscope(&["masks", "validate", "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(0));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("Skip1 far") && !table.contains("MISMATCH"));
    assert!(tmp.path().join("masks.csv").exists() && tmp.path().join("masks.json").exists());
}

#[test]
fn masks_validate_exits_2_on_count_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let shipped = include_str!("../config/masks.json").replacen("\"expected_count\": 16", "\"expected_count\": 17", 1);
    fs::write(tmp.path().join("masks.json"), shipped).unwrap();
    fs::write(tmp.path().join("config.json"), r#"{ "masks": "masks.json" }"#).unwrap();
    let out = impedscope(&["masks", "validate", "--config", p(&tmp.path().join("config.json")), "--out", p(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Long a+"));
}

#[test]
fn malformed_or_unknown_config_fields_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    for (i, text) in ["{ not json", r#"{ "n_fold": 5 }"#, r#"{ "task": 7 }"#].iter().enumerate() {
        let cfg = tmp.path().join(format!("c{i}.json"));
        fs::write(&cfg, text).unwrap();
        let out = impedscope(&["rank-freqs", "--config", p(&cfg), "--out", p(&tmp.path().join("o"))]);
        assert_eq!(out.status.code(), Some(2), "{text}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn missing_dataset_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = impedscope(&["preprocess", "--config", p(&cfg), "--out", p(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_usage_exits_2() {
    assert_eq!(impedscope(&["tune"]).status.code(), Some(2));
    assert_eq!(impedscope(&["frobnicate", "--out", "x"]).status.code(), Some(2));
}

#[test]
fn synth_train_evaluate_round() {
    let tmp = tempfile::tempdir().unwrap();
    let train = r#""train": { "params": { "model": "logistic", "c": 1.0 }, "mask": "All", "frequencies": { "top": 5 } },
        "evaluate": { "model": "model/model.bin" },"#;
    let cfg = write_config(tmp.path(), train);
    let cfg = p(&cfg);
    let run = |args: &[&str]| {
        let out = impedscope(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    run(&["synth", "--config", cfg, "--seed", "3", "--out", p(&tmp.path().join("data"))]);
    run(&["preprocess", "--config", cfg, "--out", p(&tmp.path().join("clean"))]);
    run(&["train", "--config", cfg, "--seed", "3", "--out", p(&tmp.path().join("model"))]);
    run(&["evaluate", "--config", cfg, "--seed", "3", "--out", p(&tmp.path().join("eval"))]);
    let completeness = fs::read_to_string(tmp.path().join("clean/completeness.csv")).unwrap();
    assert_eq!(completeness.lines().count(), 1 + 16);
    let preds = fs::read_to_string(tmp.path().join("eval/model_predictions.csv")).unwrap();
    assert_eq!(preds.lines().next().unwrap(), "sample_id,patient_id,true_class,p_healthy,p_cancer");
    assert_eq!(preds.lines().count(), 1 + 16);
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("eval/model_metrics.json")).unwrap()).unwrap();
    assert!(metrics["auc_micro"].as_f64().unwrap() > 0.9);
}
