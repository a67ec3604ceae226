//! `gopforge` — train, evaluate and report on progressive GOP networks.
//!
//! Exit codes: 0 success, 2 configuration/validation error, 3 progression
//! or training failure, 4 I/O or file corruption. Human-readable messages
//! go to stderr; stdout carries machine-readable results only.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gopforge_cli::config::ExperimentConfig;
use gopforge_cli::eval::{evaluate, write_predictions, EvalOptions};
use gopforge_cli::{model_io, report, run, CliError};

#[derive(Parser)]
#[command(name = "gopforge", version, about = "Progressive GOP network trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a progressive training experiment from a JSON config.
    Train {
        /// Experiment config file.
        #[arg(long)]
        config: PathBuf,
        /// Worker threads for candidate sweeps (GOPFORGE_WORKERS wins).
        #[arg(long)]
        workers: Option<usize>,
        /// Override the config's run seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory for all artifacts (overrides output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a trained model on a dataset.
    Eval {
        /// Trained .gopm-model file.
        #[arg(long)]
        model: PathBuf,
        /// Dataset: headered CSV, or a .gopm matrix with --labels.
        #[arg(long)]
        data: PathBuf,
        /// Label column name for CSV data.
        #[arg(long, default_value = "label")]
        label_column: String,
        /// Feature columns (default: all non-label columns).
        #[arg(long, value_delimiter = ',')]
        features: Option<Vec<String>>,
        /// Label file for .gopm data (one label per row).
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Write per-sample predictions CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate run summaries into comparison tables.
    Report {
        /// Directory holding runs (each with a run_summary.json).
        #[arg(long)]
        run_dir: PathBuf,
        /// Output format; only "csv" is supported.
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Print a model file's manifest.
    Inspect {
        #[arg(long)]
        model: PathBuf,
    },
}

fn effective_workers(flag: Option<usize>, config_value: usize) -> Result<usize, CliError> {
    if let Ok(env) = std::env::var("GOPFORGE_WORKERS") {
        let parsed: usize = env
            .parse()
            .map_err(|_| CliError::config(format!("GOPFORGE_WORKERS='{}' is not a count", env)))?;
        return Ok(parsed);
    }
    Ok(flag.unwrap_or(config_value))
}

fn cmd_train(
    config_path: PathBuf,
    workers: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::from_path(&config_path)?;
    cfg.workers = effective_workers(workers, cfg.workers)?;
    if let Some(seed) = seed {
        cfg.run_seed = seed;
    }
    let out_dir = out
        .or_else(|| cfg.output.dir.clone())
        .ok_or_else(|| CliError::config("no output directory: set output.dir or pass --out".to_string()))?;
    cfg.output.dir = Some(out_dir.clone());
    cfg.validate()?;

    let artifacts = run::run_experiment(&cfg, &out_dir)?;
    let line = serde_json::json!({
        "model": artifacts.model_path.display().to_string(),
        "steps": artifacts.summary.steps,
        "total_candidates": artifacts.summary.total_candidates,
        "train_accuracy": artifacts.summary.train_accuracy,
        "val_accuracy": artifacts.summary.val_accuracy,
        "test_accuracy": artifacts.summary.test_accuracy,
        "seconds_total": artifacts.summary.seconds_total,
    });
    println!("{}", line);
    Ok(())
}

fn cmd_eval(
    model_path: PathBuf,
    data: PathBuf,
    label_column: String,
    features: Option<Vec<String>>,
    labels: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let (model, manifest) = model_io::load_model(&model_path)?;
    let opts = EvalOptions {
        label_column,
        feature_columns: features,
        labels,
    };
    let eval = evaluate(&model, &manifest, &data, &opts)?;

    println!("accuracy,{}", eval.accuracy);
    let classes = eval.confusion.len();
    let header: Vec<String> = (0..classes).map(|c| format!("pred_{}", c)).collect();
    println!("confusion,true,{}", header.join(","));
    for (t, row) in eval.confusion.iter().enumerate() {
        let counts: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        println!("confusion,{},{}", t, counts.join(","));
    }

    if let Some(out) = out {
        write_predictions(&out, &eval)?;
    }
    Ok(())
}

fn cmd_report(run_dir: PathBuf, format: String) -> Result<(), CliError> {
    if format != "csv" {
        return Err(CliError::config(format!(
            "unsupported report format '{}' (only csv)",
            format
        )));
    }
    let comparison = report::build_report(&run_dir)?;
    print!("{}", comparison);
    Ok(())
}

fn cmd_inspect(model_path: PathBuf) -> Result<(), CliError> {
    let (_, manifest) = model_io::load_model(&model_path)?;
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::io(format!("manifest serialization: {}", e)))?;
    println!("{}", text);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train {
            config,
            workers,
            seed,
            out,
        } => cmd_train(config, workers, seed, out),
        Command::Eval {
            model,
            data,
            label_column,
            features,
            labels,
            out,
        } => cmd_eval(model, data, label_column, features, labels, out),
        Command::Report { run_dir, format } => cmd_report(run_dir, format),
        Command::Inspect { model } => cmd_inspect(model),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
