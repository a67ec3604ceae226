//! Model evaluation: forward a dataset through a trained model, align its
//! label indices with the training-time class table, and emit accuracy,
//! confusion counts and per-sample predictions.

use std::io::Write;
use std::path::Path;

use gopforge::{load_csv, load_matrix_gopm, CsvSchema, Dataset, Matrix, NetworkModel};

use crate::model_io::ModelManifest;
use crate::CliError;

pub struct EvalOptions {
    /// Label column for CSV inputs.
    pub label_column: String,
    /// Explicit feature columns; default is every non-label column.
    pub feature_columns: Option<Vec<String>>,
    /// Label file for GOPM inputs (one label per row).
    pub labels: Option<std::path::PathBuf>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            label_column: "label".into(),
            feature_columns: None,
            labels: None,
        }
    }
}

pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[true][pred]` counts over the model's class indices.
    pub confusion: Vec<Vec<usize>>,
    pub true_labels: Vec<usize>,
    pub predicted: Vec<usize>,
    pub scores: Matrix,
}

fn load_eval_dataset(data: &Path, opts: &EvalOptions) -> Result<Dataset, CliError> {
    let map = |e: gopforge::Error| match e {
        gopforge::Error::Io(_) => CliError::io(e.to_string()),
        _ => CliError::config(e.to_string()),
    };
    if data.extension().and_then(|e| e.to_str()) == Some("gopm") {
        let labels_path = opts.labels.as_ref().ok_or_else(|| {
            CliError::config("GOPM feature input needs --labels <file> with one label per row".to_string())
        })?;
        let x = load_matrix_gopm(data).map_err(map)?;
        let text = std::fs::read_to_string(labels_path)
            .map_err(|e| CliError::io(format!("cannot read labels {}: {}", labels_path.display(), e)))?;
        let mut labels = Vec::new();
        let mut names: Vec<String> = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let idx = names.iter().position(|n| n == line).unwrap_or_else(|| {
                names.push(line.to_string());
                names.len() - 1
            });
            labels.push(idx);
        }
        Dataset::new(x, labels, names.len().max(1))
            .and_then(|ds| ds.with_class_names(names))
            .map_err(map)
    } else {
        let schema = CsvSchema {
            label_column: opts.label_column.clone(),
            feature_columns: opts.feature_columns.clone(),
        };
        load_csv(data, &schema).map_err(map)
    }
}

/// Re-indexes the eval dataset's labels into the model's class table. The
/// eval file may list classes in any order; names must match the training
/// set when both sides carry names.
fn align_labels(ds: &Dataset, manifest: &ModelManifest) -> Result<Vec<usize>, CliError> {
    match (ds.class_names(), &manifest.class_names) {
        (Some(eval_names), Some(train_names)) => {
            let mut mapping = Vec::with_capacity(eval_names.len());
            for name in eval_names {
                let idx = train_names.iter().position(|n| n == name).ok_or_else(|| {
                    CliError::config(format!(
                        "label '{}' in the eval data is unknown to the model (classes: {})",
                        name,
                        train_names.join(", ")
                    ))
                })?;
                mapping.push(idx);
            }
            Ok(ds.labels().iter().map(|&l| mapping[l]).collect())
        }
        _ => {
            if ds.class_count() > manifest.output_dim {
                return Err(CliError::config(format!(
                    "eval data has {} classes, model outputs {}",
                    ds.class_count(),
                    manifest.output_dim
                )));
            }
            Ok(ds.labels().to_vec())
        }
    }
}

pub fn evaluate(
    model: &NetworkModel<f64>,
    manifest: &ModelManifest,
    data: &Path,
    opts: &EvalOptions,
) -> Result<Evaluation, CliError> {
    let ds = load_eval_dataset(data, opts)?;
    if ds.feature_dim() != model.input_dim() {
        return Err(CliError::config(format!(
            "feature dimension mismatch: model expects {}, data has {}",
            model.input_dim(),
            ds.feature_dim()
        )));
    }
    let labels = align_labels(&ds, manifest)?;

    let scores = model
        .forward(ds.features())
        .map_err(|e| CliError::run(e.to_string()))?;
    let predicted: Vec<usize> = (0..scores.rows())
        .map(|r| {
            let row = scores.row(r);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();

    let classes = model.output_dim();
    let mut confusion = vec![vec![0usize; classes]; classes];
    let mut hits = 0usize;
    for (&t, &p) in labels.iter().zip(&predicted) {
        confusion[t][p] += 1;
        if t == p {
            hits += 1;
        }
    }
    Ok(Evaluation {
        accuracy: hits as f64 / labels.len().max(1) as f64,
        confusion,
        true_labels: labels,
        predicted,
        scores,
    })
}

/// Writes the predictions CSV: `sample_index,true,predicted,score_0..`.
pub fn write_predictions(path: &Path, eval: &Evaluation) -> Result<(), CliError> {
    let mut w = std::fs::File::create(path)
        .map_err(|e| CliError::io(format!("cannot create {}: {}", path.display(), e)))?;
    let io_err = |e: std::io::Error| CliError::io(format!("writing {}: {}", path.display(), e));
    let classes = eval.scores.cols();
    let mut header = String::from("sample_index,true,predicted");
    for c in 0..classes {
        header.push_str(&format!(",score_{}", c));
    }
    writeln!(w, "{}", header).map_err(io_err)?;
    for i in 0..eval.true_labels.len() {
        let mut line = format!("{},{},{}", i, eval.true_labels[i], eval.predicted[i]);
        for c in 0..classes {
            line.push_str(&format!(",{}", eval.scores[(i, c)]));
        }
        writeln!(w, "{}", line).map_err(io_err)?;
    }
    Ok(())
}
