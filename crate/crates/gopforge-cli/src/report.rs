//! Aggregation of finished runs into comparison tables: accuracy medians
//! over seeds and seconds per layer, grouped by algorithm and dataset,
//! plus a long-format file for plotting.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::run::{RunSummary, SUMMARY_SCHEMA_VERSION};
use crate::CliError;

fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// A summary's headline accuracy: test when present, else validation, else
/// train.
fn headline_accuracy(s: &RunSummary) -> f64 {
    s.test_accuracy.or(s.val_accuracy).unwrap_or(s.train_accuracy)
}

/// Finds `run_summary.json` in the run dir itself and in each immediate
/// subdirectory.
pub fn collect_summaries(run_dir: &Path) -> Result<Vec<(String, RunSummary)>, CliError> {
    let mut candidates = vec![run_dir.join("run_summary.json")];
    if let Ok(entries) = fs::read_dir(run_dir) {
        let mut dirs: Vec<_> = entries
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        for d in dirs {
            candidates.push(d.join("run_summary.json"));
        }
    }

    let mut out = Vec::new();
    for path in candidates {
        if !path.is_file() {
            continue;
        }
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::io(format!("cannot read {}: {}", path.display(), e)))?;
        let summary: RunSummary = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {}", path.display(), e)))?;
        if summary.schema_version != SUMMARY_SCHEMA_VERSION {
            return Err(CliError::config(format!(
                "{}: incompatible schema version {} (expected {})",
                path.display(),
                summary.schema_version,
                SUMMARY_SCHEMA_VERSION
            )));
        }
        let run_id = path
            .parent()
            .and_then(|p| p.file_name())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        out.push((run_id, summary));
    }
    if out.is_empty() {
        return Err(CliError::config(format!(
            "no run_summary.json found under {}",
            run_dir.display()
        )));
    }
    Ok(out)
}

/// Builds `comparison.csv` (medians per algorithm x dataset) and `long.csv`
/// (one metric per line) in the run dir, returning the comparison text.
pub fn build_report(run_dir: &Path) -> Result<String, CliError> {
    let summaries = collect_summaries(run_dir)?;

    let mut groups: BTreeMap<(String, String), Vec<&RunSummary>> = BTreeMap::new();
    for (_, s) in &summaries {
        groups
            .entry((s.algorithm.clone(), s.dataset.clone()))
            .or_default()
            .push(s);
    }

    let mut comparison = String::from("algorithm,dataset,runs,median_accuracy,median_seconds_per_layer\n");
    for ((algorithm, dataset), runs) in &groups {
        let mut accs: Vec<f64> = runs.iter().map(|s| headline_accuracy(s)).collect();
        let mut secs: Vec<f64> = runs.iter().map(|s| s.seconds_per_layer).collect();
        comparison.push_str(&format!(
            "{},{},{},{},{}\n",
            algorithm,
            dataset,
            runs.len(),
            median(&mut accs),
            median(&mut secs)
        ));
    }
    fs::write(run_dir.join("comparison.csv"), &comparison)
        .map_err(|e| CliError::io(format!("writing comparison.csv: {}", e)))?;

    let mut long = fs::File::create(run_dir.join("long.csv"))
        .map_err(|e| CliError::io(format!("creating long.csv: {}", e)))?;
    let io_err = |e: std::io::Error| CliError::io(format!("writing long.csv: {}", e));
    writeln!(long, "run,algorithm,dataset,run_seed,metric,value").map_err(io_err)?;
    for (run_id, s) in &summaries {
        let mut metrics: Vec<(&str, f64)> = vec![
            ("train_accuracy", s.train_accuracy),
            ("seconds_per_layer", s.seconds_per_layer),
            ("seconds_total", s.seconds_total),
            ("steps", s.steps as f64),
            ("total_candidates", s.total_candidates as f64),
        ];
        if let Some(v) = s.val_accuracy {
            metrics.push(("val_accuracy", v));
        }
        if let Some(v) = s.test_accuracy {
            metrics.push(("test_accuracy", v));
        }
        for (metric, value) in metrics {
            writeln!(
                long,
                "{},{},{},{},{},{}",
                run_id, s.algorithm, s.dataset, s.run_seed, metric, value
            )
            .map_err(io_err)?;
        }
    }

    Ok(comparison)
}
