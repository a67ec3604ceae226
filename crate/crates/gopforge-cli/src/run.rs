//! Experiment orchestration: dataset construction, the progressive run,
//! and all on-disk artifacts of a training run.
//!
//! A run directory contains:
//!
//! * `model.gopm-model` — the trained network (manifest + weights),
//! * `steps.csv` — one line per progressive step,
//! * `sweeps/step<k>_<label>.csv` — per-candidate losses and timings,
//! * `curves/…` — per-epoch winner/finetune curves when enabled,
//! * `split_manifest.csv` — sample-to-split assignment when enabled,
//! * `run_summary.json` — the aggregate consumed by `gopforge report`,
//! * `config_echo.json` — rerunnable copy of the effective config.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gopforge::{
    load_csv, load_matrix_gopm, make_synthetic, split_dataset, CsvSchema, Dataset, NetworkModel,
    NetworkTemplate, RunReport, StepRecord,
};

use crate::config::{DataSource, ExperimentConfig};
use crate::model_io;
use crate::CliError;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Aggregate of one finished run, written as `run_summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub algorithm: String,
    pub dataset: String,
    pub run_seed: u64,
    pub workers: usize,
    pub steps: usize,
    pub total_candidates: usize,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub seconds_total: f64,
    pub seconds_per_layer: f64,
}

fn map_core(e: gopforge::Error) -> CliError {
    use gopforge::Error as E;
    match e {
        E::Invalid(_) | E::Shape { .. } | E::Parse { .. } => CliError::config(e.to_string()),
        E::Io(_) => CliError::io(e.to_string()),
        _ => CliError::run(e.to_string()),
    }
}

/// Reads one label per non-empty line, mapping to dense indices in
/// first-appearance order.
fn read_label_file(path: &Path) -> Result<(Vec<usize>, Vec<String>), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read labels {}: {}", path.display(), e)))?;
    let mut labels = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let idx = match names.iter().position(|n| n == line) {
            Some(i) => i,
            None => {
                names.push(line.to_string());
                names.len() - 1
            }
        };
        labels.push(idx);
    }
    if labels.is_empty() {
        return Err(CliError::config(format!(
            "label file {} has no entries",
            path.display()
        )));
    }
    Ok((labels, names))
}

/// Builds and splits the dataset described by the config.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset, CliError> {
    let ds = match &cfg.data.source {
        DataSource::Csv {
            path,
            label_column,
            feature_columns,
        } => {
            let schema = CsvSchema {
                label_column: label_column.clone(),
                feature_columns: feature_columns.clone(),
            };
            load_csv(path, &schema).map_err(map_core)?
        }
        DataSource::Gopm { features, labels } => {
            let x = load_matrix_gopm(features).map_err(map_core)?;
            let (labels, names) = read_label_file(labels)?;
            let classes = names.len();
            Dataset::new(x, labels, classes)
                .and_then(|ds| ds.with_class_names(names))
                .map_err(map_core)?
        }
        source @ DataSource::Synthetic { seed, .. } => {
            let spec = source
                .to_synthetic_spec()?
                .expect("synthetic source has a spec");
            make_synthetic(&spec, seed.unwrap_or(cfg.run_seed)).map_err(map_core)?
        }
    };
    let f = cfg.split_fractions();
    split_dataset(ds, (f[0], f[1], f[2]), cfg.split_seed()).map_err(map_core)
}

/// The dataset's class-name table, used to align eval-time label indices
/// with training-time ones.
pub fn dataset_class_names(ds: &Dataset) -> Option<Vec<String>> {
    ds.class_names().map(|n| n.to_vec())
}

fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{}", v)
    } else {
        "inf".to_string()
    }
}

fn write_steps_csv(path: &Path, steps: &[StepRecord]) -> Result<(), CliError> {
    let mut w = fs::File::create(path)
        .map_err(|e| CliError::io(format!("cannot create {}: {}", path.display(), e)))?;
    let io_err = |e: std::io::Error| CliError::io(format!("writing {}: {}", path.display(), e));
    writeln!(
        w,
        "step,candidates,best_opset_nodal,best_opset_pool,best_opset_act,best_loss,val_acc,stopped,seconds"
    )
    .map_err(io_err)?;
    for s in steps {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            s.step,
            s.candidates,
            s.opset.nodal.name(),
            s.opset.pool.name(),
            s.opset.act.name(),
            fmt_f64(s.best_loss),
            fmt_f64(s.accuracy),
            s.stopped,
            fmt_f64(s.seconds),
        )
        .map_err(io_err)?;
    }
    Ok(())
}

fn write_sweep_csvs(dir: &Path, steps: &[StepRecord]) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::io(format!("cannot create {}: {}", dir.display(), e)))?;
    for s in steps {
        for table in &s.sweeps {
            let path = dir.join(format!("step{}_{}.csv", s.step, table.label));
            let mut w = fs::File::create(&path)
                .map_err(|e| CliError::io(format!("cannot create {}: {}", path.display(), e)))?;
            let io_err = |e: std::io::Error| CliError::io(format!("writing {}: {}", path.display(), e));
            writeln!(w, "candidate_index,opset_nodal,opset_pool,opset_act,loss,seconds,status")
                .map_err(io_err)?;
            for row in &table.rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    row.candidate_index,
                    row.opset.nodal.name(),
                    row.opset.pool.name(),
                    row.opset.act.name(),
                    fmt_f64(row.loss),
                    fmt_f64(row.seconds),
                    row.status.replace(',', ";"),
                )
                .map_err(io_err)?;
            }
        }
    }
    Ok(())
}

fn write_curve_csv(path: &Path, curves: &gopforge::progress::CurveSet) -> Result<(), CliError> {
    let mut w = fs::File::create(path)
        .map_err(|e| CliError::io(format!("cannot create {}: {}", path.display(), e)))?;
    let io_err = |e: std::io::Error| CliError::io(format!("writing {}: {}", path.display(), e));
    writeln!(w, "epoch,lr,train_loss,train_acc,val_acc").map_err(io_err)?;
    for epoch in 0..curves.loss.len() {
        let train_acc = curves
            .train_acc
            .get(epoch)
            .map(|v| fmt_f64(*v))
            .unwrap_or_default();
        let val_acc = curves
            .val_acc
            .get(epoch)
            .map(|v| fmt_f64(*v))
            .unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{}",
            epoch,
            fmt_f64(curves.lr[epoch]),
            fmt_f64(curves.loss[epoch]),
            train_acc,
            val_acc
        )
        .map_err(io_err)?;
    }
    Ok(())
}

pub struct TrainArtifacts {
    pub model: NetworkModel<f64>,
    pub report: RunReport,
    pub summary: RunSummary,
    pub model_path: PathBuf,
}

/// Runs the configured experiment and writes every artifact into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TrainArtifacts, CliError> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::io(format!("cannot create {}: {}", out_dir.display(), e)))?;

    let dataset = load_dataset(cfg)?;
    let template = NetworkTemplate::new(
        dataset.feature_dim(),
        cfg.template.hidden_sizes.clone(),
        dataset.class_count(),
    )
    .map_err(map_core)?;
    let progression = cfg.to_progression(template)?;

    let (model, report) = gopforge::run_progression(&dataset, &progression).map_err(map_core)?;

    let manifest = model_io::build_manifest(
        &model,
        cfg.run_seed,
        dataset_class_names(&dataset),
        cfg.echo(),
        &report.steps,
    );
    let model_path = out_dir.join(format!("model.{}", model_io::MODEL_EXTENSION));
    model_io::save_model(&model_path, &model, &manifest)?;

    write_steps_csv(&out_dir.join("steps.csv"), &report.steps)?;
    write_sweep_csvs(&out_dir.join("sweeps"), &report.steps)?;

    if cfg.output.curves {
        let curve_dir = out_dir.join("curves");
        fs::create_dir_all(&curve_dir)
            .map_err(|e| CliError::io(format!("cannot create {}: {}", curve_dir.display(), e)))?;
        for s in &report.steps {
            write_curve_csv(&curve_dir.join(format!("step{}.csv", s.step)), &s.winner_curves)?;
        }
        if let Some(ft) = &report.finetune {
            write_curve_csv(&curve_dir.join("finetune.csv"), &ft.curves)?;
        }
    }
    if cfg.output.split_manifest {
        gopforge::data::write_split_manifest(&out_dir.join("split_manifest.csv"), &dataset)
            .map_err(map_core)?;
    }

    let summary = RunSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        algorithm: report.algorithm.name().to_string(),
        dataset: cfg.data.source.label(),
        run_seed: cfg.run_seed,
        workers: cfg.workers,
        steps: report.steps.len(),
        total_candidates: report.total_candidates,
        train_accuracy: report.train_accuracy,
        val_accuracy: report.val_accuracy,
        test_accuracy: report.test_accuracy,
        seconds_total: report.seconds_total,
        seconds_per_layer: report.seconds_per_layer(),
    };
    let summary_json = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::io(format!("summary serialization: {}", e)))?;
    fs::write(out_dir.join("run_summary.json"), summary_json)
        .map_err(|e| CliError::io(format!("writing run_summary.json: {}", e)))?;

    let echo_json = serde_json::to_string_pretty(&cfg.echo())
        .map_err(|e| CliError::io(format!("config echo serialization: {}", e)))?;
    fs::write(out_dir.join("config_echo.json"), echo_json)
        .map_err(|e| CliError::io(format!("writing config_echo.json: {}", e)))?;

    Ok(TrainArtifacts {
        model,
        report,
        summary,
        model_path,
    })
}
