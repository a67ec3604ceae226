//! Binary-level tests: exit codes, artifact layout, determinism of the
//! model payload and the rerun-from-echo contract.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_gopforge")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("GOPFORGE_WORKERS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(&body).unwrap()).unwrap();
    path
}

fn quick_config(seed: u64) -> serde_json::Value {
    serde_json::json!({
        "algorithm": "popfast",
        "template": {"hidden_sizes": [4, 4]},
        "train": {
            "epochs": 4, "lr_initial": 0.1, "lr_drop_every": 0, "lr_drop_factor": 0.1,
            "batch_size": 32, "dropout_rate": 0.0,
            "regularizer": {"kind": "none"}, "loss": "mse", "momentum": 0.0
        },
        "finetune": {
            "epochs": 3, "lr_initial": 0.01, "lr_drop_every": 0, "lr_drop_factor": 0.1,
            "batch_size": 32, "dropout_rate": 0.0,
            "regularizer": {"kind": "none"}, "loss": "mse", "momentum": 0.0
        },
        "data": {
            "source": {"kind": "synthetic", "name": "blobs",
                       "samples": 150, "dim": 4, "classes": 3,
                       "center_box": 4.0, "noise": 1.0}
        },
        "run_seed": seed,
        "workers": 2
    })
}

#[test]
fn train_writes_artifacts_and_bounded_steps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", quick_config(3));
    let out_dir = dir.path().join("run");
    let out = run(&["train", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    assert!(out_dir.join("model.gopm-model").is_file());
    assert!(out_dir.join("run_summary.json").is_file());
    assert!(out_dir.join("config_echo.json").is_file());
    let steps = fs::read_to_string(out_dir.join("steps.csv")).unwrap();
    let data_rows = steps.lines().count() - 1;
    assert!(data_rows >= 1 && data_rows <= 2, "steps.csv rows: {}", data_rows);

    // Stdout is one machine-readable JSON line.
    let stdout = String::from_utf8(out.stdout).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert!(parsed["train_accuracy"].as_f64().is_some());
}

#[test]
fn missing_memory_kind_exits_2_naming_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = quick_config(1);
    body["algorithm"] = "popmem-o".into();
    let cfg = write_config(dir.path(), "cfg.json", body);
    let out_dir = dir.path().join("run");
    let out = run(&["train", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("memory_kind"), "stderr: {}", stderr);
}

#[test]
fn rerun_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", quick_config(9));
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out_dir in [&out_a, &out_b] {
        let out = run(&["train", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success());
    }
    let a = fs::read(out_a.join("model.gopm-model")).unwrap();
    let b = fs::read(out_b.join("model.gopm-model")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn rerun_from_config_echo_reproduces_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", quick_config(17));
    let out_a = dir.path().join("a");
    let out = run(&["train", "--config", cfg.to_str().unwrap(), "--out", out_a.to_str().unwrap()]);
    assert!(out.status.success());

    let echo = out_a.join("config_echo.json");
    let out_b = dir.path().join("b");
    let out = run(&["train", "--config", echo.to_str().unwrap(), "--out", out_b.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let a = fs::read(out_a.join("model.gopm-model")).unwrap();
    let b = fs::read(out_b.join("model.gopm-model")).unwrap();
    assert_eq!(a, b);
}

/// Writes the dataset regenerated from the config as a CSV, keeping the
/// exact f64 values (shortest round-trip formatting).
fn synthetic_to_csv(path: &Path, seed: u64) -> (usize, usize) {
    use gopforge::{make_synthetic, SyntheticSpec};
    let ds = make_synthetic(
        &SyntheticSpec::Blobs {
            samples: 150,
            dim: 4,
            classes: 3,
            center_box: 4.0,
            noise: 1.0,
        },
        seed,
    )
    .unwrap();
    let mut text = String::from("f0,f1,f2,f3,label\n");
    for r in 0..ds.len() {
        for v in ds.features().row(r) {
            text.push_str(&format!("{},", v));
        }
        text.push_str(&format!("{}\n", ds.labels()[r]));
    }
    fs::write(path, text).unwrap();
    (ds.len(), ds.feature_dim())
}

#[test]
fn eval_matches_training_forward_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", quick_config(21));
    let out_dir = dir.path().join("run");
    let out = run(&["train", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());

    // Evaluate on the full regenerated dataset (same bits as training saw).
    let csv = dir.path().join("all.csv");
    synthetic_to_csv(&csv, 21);
    let model = out_dir.join("model.gopm-model");
    let preds = dir.path().join("preds.csv");
    let out = run(&[
        "eval",
        "--model",
        model.to_str().unwrap(),
        "--data",
        csv.to_str().unwrap(),
        "--out",
        preds.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let acc_line = stdout.lines().next().unwrap();
    assert!(acc_line.starts_with("accuracy,"));
    let acc: f64 = acc_line.split(',').nth(1).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    // Confusion rows: one per class.
    assert_eq!(stdout.lines().filter(|l| l.starts_with("confusion,")).count(), 4);
    // Predictions file: header + one row per sample, with per-class scores.
    let preds_text = fs::read_to_string(&preds).unwrap();
    assert_eq!(preds_text.lines().count(), 151);
    assert!(preds_text.starts_with("sample_index,true,predicted,score_0,score_1,score_2"));
}

#[test]
fn eval_dimension_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", quick_config(23));
    let out_dir = dir.path().join("run");
    assert!(run(&["train", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
        .status
        .success());

    let bad_csv = dir.path().join("bad.csv");
    fs::write(&bad_csv, "f0,f1,label\n1.0,2.0,0\n3.0,4.0,1\n").unwrap();
    let model = out_dir.join("model.gopm-model");
    let out = run(&["eval", "--model", model.to_str().unwrap(), "--data", bad_csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("expects 4") && stderr.contains("has 2"), "stderr: {}", stderr);
}

#[test]
fn truncated_model_exits_4_with_corruption_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", quick_config(25));
    let out_dir = dir.path().join("run");
    assert!(run(&["train", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
        .status
        .success());
    let model = out_dir.join("model.gopm-model");
    let bytes = fs::read(&model).unwrap();
    let cut = dir.path().join("cut.gopm-model");
    fs::write(&cut, &bytes[..bytes.len() - 16]).unwrap();

    let csv = dir.path().join("all.csv");
    synthetic_to_csv(&csv, 25);
    let out = run(&["eval", "--model", cut.to_str().unwrap(), "--data", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("corrupt"), "stderr: {}", stderr);
}

#[test]
fn inspect_prints_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", quick_config(27));
    let out_dir = dir.path().join("run");
    assert!(run(&["train", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
        .status
        .success());
    let model = out_dir.join("model.gopm-model");
    let out = run(&["inspect", "--model", model.to_str().unwrap()]);
    assert!(out.status.success());
    let manifest: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(manifest["algorithm"], "popfast");
    assert_eq!(manifest["format_version"], 1);
    let nodal = manifest["blocks"][0]["opset"]["nodal"].as_str().unwrap();
    assert!(gopforge::NodalOp::from_name(nodal).is_some());
}

#[test]
fn report_aggregates_and_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    // Empty run dir: exit 2.
    let empty = dir.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let out = run(&["report", "--run-dir", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // Two runs of the same experiment, different seeds.
    let runs = dir.path().join("runs");
    for seed in [31u64, 33] {
        let cfg = write_config(dir.path(), &format!("cfg{}.json", seed), quick_config(seed));
        let out_dir = runs.join(format!("seed{}", seed));
        assert!(run(&["train", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
            .status
            .success());
    }
    let out = run(&["report", "--run-dir", runs.to_str().unwrap()]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("algorithm,dataset,runs,median_accuracy,median_seconds_per_layer"));
    assert!(stdout.contains("popfast,blobs,2,"));
    assert!(runs.join("comparison.csv").is_file());
    assert!(runs.join("long.csv").is_file());

    // Unsupported format: exit 2.
    let out = run(&["report", "--run-dir", runs.to_str().unwrap(), "--format", "xml"]);
    assert_eq!(out.status.code(), Some(2));

    // A summary with a foreign schema version is named in the error.
    let rogue = runs.join("rogue");
    fs::create_dir_all(&rogue).unwrap();
    let mut summary: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(runs.join("seed31").join("run_summary.json")).unwrap(),
    )
    .unwrap();
    summary["schema_version"] = 99.into();
    fs::write(rogue.join("run_summary.json"), summary.to_string()).unwrap();
    let out = run(&["report", "--run-dir", runs.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("rogue"), "stderr: {}", stderr);
}

#[test]
fn workers_env_override_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", quick_config(41));
    let out_dir = dir.path().join("run");
    let out = Command::new(bin())
        .args(["train", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
        .env("GOPFORGE_WORKERS", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(bin())
        .args(["train", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
        .env("GOPFORGE_WORKERS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
}
