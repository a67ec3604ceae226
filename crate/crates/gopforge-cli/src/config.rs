//! Experiment configuration: a single JSON file describing one progressive
//! run. Flags override the execution-only keys (`workers`, `output.dir`,
//! `run_seed`) for quick sweeps.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gopforge::{
    AlgorithmKind, LossKind, MemoryFit, MetricSplit, NetworkTemplate, OutputActivation,
    ProgressionConfig, Regularizer, StopMode, StoppingRule, SyntheticSpec, TrainConfig,
};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// "pop", "popfast", "popmem-h" or "popmem-o".
    pub algorithm: String,
    /// "pca" or "lda"; required for the popmem algorithms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_kind: Option<String>,
    #[serde(default)]
    pub pca: PcaParams,
    #[serde(default)]
    pub lda: LdaParams,
    pub template: TemplateParams,
    #[serde(default)]
    pub train: TrainParams,
    /// Whole-network finetuning; explicit `null` disables it.
    #[serde(default = "default_finetune")]
    pub finetune: Option<TrainParams>,
    #[serde(default)]
    pub stopping: StoppingParams,
    pub data: DataParams,
    #[serde(default)]
    pub output_activation: OutputActivationParam,
    #[serde(default)]
    pub run_seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub output: OutputParams,
}

fn default_workers() -> usize {
    1
}

fn default_finetune() -> Option<TrainParams> {
    Some(TrainParams::finetune_defaults())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TemplateParams {
    pub hidden_sizes: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PcaParams {
    pub energy_threshold: f64,
    pub ridge: f64,
}

impl Default for PcaParams {
    fn default() -> Self {
        Self {
            energy_threshold: 0.98,
            ridge: 0.01,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LdaParams {
    pub ridge: f64,
}

impl Default for LdaParams {
    fn default() -> Self {
        Self { ridge: 0.01 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainParams {
    pub epochs: usize,
    pub lr_initial: f64,
    pub lr_drop_every: usize,
    pub lr_drop_factor: f64,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub regularizer: RegularizerParams,
    /// "mse" or "cross_entropy".
    pub loss: String,
    pub momentum: f64,
}

impl Default for TrainParams {
    /// Search-phase defaults: 300 epochs at 0.01, dropping by 10x every
    /// 100 epochs, batch 32, 50% dropout, weight decay 1e-4, MSE.
    fn default() -> Self {
        Self {
            epochs: 300,
            lr_initial: 0.01,
            lr_drop_every: 100,
            lr_drop_factor: 0.1,
            batch_size: 32,
            dropout_rate: 0.5,
            regularizer: RegularizerParams {
                kind: "weight_decay".into(),
                value: 1e-4,
            },
            loss: "mse".into(),
            momentum: 0.0,
        }
    }
}

impl TrainParams {
    pub fn finetune_defaults() -> Self {
        Self {
            epochs: 200,
            lr_initial: 1e-4,
            ..Self::default()
        }
    }

    pub fn to_train_config(&self, track_accuracy: bool) -> Result<TrainConfig, CliError> {
        let regularizer = match self.regularizer.kind.as_str() {
            "weight_decay" => Regularizer::WeightDecay(self.regularizer.value),
            "max_norm" => Regularizer::MaxNorm(self.regularizer.value),
            "none" => Regularizer::None,
            other => {
                return Err(CliError::config(format!(
                    "unknown regularizer kind '{}' (expected weight_decay, max_norm or none)",
                    other
                )))
            }
        };
        let loss = LossKind::from_name(&self.loss).ok_or_else(|| {
            CliError::config(format!(
                "unknown loss '{}' (expected mse or cross_entropy)",
                self.loss
            ))
        })?;
        Ok(TrainConfig {
            epochs: self.epochs,
            lr_initial: self.lr_initial,
            lr_drop_every: self.lr_drop_every,
            lr_drop_factor: self.lr_drop_factor,
            batch_size: self.batch_size,
            dropout_rate: self.dropout_rate,
            regularizer,
            loss,
            momentum: self.momentum,
            track_accuracy,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RegularizerParams {
    /// "weight_decay", "max_norm" or "none".
    pub kind: String,
    #[serde(default)]
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StoppingParams {
    /// "relative_accuracy" or "absolute_loss".
    pub mode: String,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub epsilon: f64,
    /// "validation" or "train".
    #[serde(default = "default_metric_split")]
    pub metric_split: String,
}

fn default_threshold() -> f64 {
    1e-4
}

fn default_metric_split() -> String {
    "validation".into()
}

impl Default for StoppingParams {
    fn default() -> Self {
        Self {
            mode: "relative_accuracy".into(),
            threshold: 1e-4,
            epsilon: 0.0,
            metric_split: "validation".into(),
        }
    }
}

impl StoppingParams {
    pub fn to_rule(&self) -> Result<StoppingRule, CliError> {
        let mode = match self.mode.as_str() {
            "relative_accuracy" => StopMode::RelativeAccuracy {
                threshold: self.threshold,
            },
            "absolute_loss" => StopMode::AbsoluteLoss { epsilon: self.epsilon },
            other => {
                return Err(CliError::config(format!(
                    "unknown stopping mode '{}' (expected relative_accuracy or absolute_loss)",
                    other
                )))
            }
        };
        let metric_split = match self.metric_split.as_str() {
            "validation" => MetricSplit::Validation,
            "train" => MetricSplit::Train,
            other => {
                return Err(CliError::config(format!(
                    "unknown metric split '{}' (expected validation or train)",
                    other
                )))
            }
        };
        Ok(StoppingRule { mode, metric_split })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DataParams {
    pub source: DataSource,
    #[serde(default)]
    pub split: SplitParams,
    #[serde(default = "default_true")]
    pub standardize: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    /// Headered CSV with a named label column.
    Csv {
        path: PathBuf,
        label_column: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        feature_columns: Option<Vec<String>>,
    },
    /// GOPM binary feature matrix plus a text file with one label per row.
    Gopm { features: PathBuf, labels: PathBuf },
    /// Built-in generators for the synthetic suite.
    Synthetic {
        name: String,
        #[serde(default)]
        samples: usize,
        #[serde(default)]
        dim: usize,
        #[serde(default)]
        classes: usize,
        #[serde(default)]
        pairs: usize,
        #[serde(default)]
        center_box: f64,
        #[serde(default)]
        margin: f64,
        #[serde(default)]
        noise: f64,
        /// Generator seed; defaults to the run seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

impl DataSource {
    /// Short label used in run summaries and comparison tables.
    pub fn label(&self) -> String {
        match self {
            DataSource::Csv { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "csv".into()),
            DataSource::Gopm { features, .. } => features
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "gopm".into()),
            DataSource::Synthetic { name, .. } => name.clone(),
        }
    }

    pub fn to_synthetic_spec(&self) -> Result<Option<SyntheticSpec>, CliError> {
        let DataSource::Synthetic {
            name,
            samples,
            dim,
            classes,
            pairs,
            center_box,
            margin,
            noise,
            ..
        } = self
        else {
            return Ok(None);
        };
        let spec = match name.as_str() {
            "blobs" => SyntheticSpec::Blobs {
                samples: *samples,
                dim: *dim,
                classes: *classes,
                center_box: *center_box,
                noise: *noise,
            },
            "moons" => SyntheticSpec::Moons {
                samples: *samples,
                dim: *dim,
                noise: *noise,
            },
            "layered-xor" => SyntheticSpec::LayeredXor {
                samples: *samples,
                pairs: *pairs,
                dim: *dim,
                margin: *margin,
                noise: *noise,
            },
            other => {
                return Err(CliError::config(format!(
                    "unknown synthetic dataset '{}' (expected blobs, moons or layered-xor)",
                    other
                )))
            }
        };
        Ok(Some(spec))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SplitParams {
    pub fractions: [f64; 3],
    /// Split seed; defaults to the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for SplitParams {
    fn default() -> Self {
        Self {
            fractions: [0.6, 0.2, 0.2],
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivationParam {
    Softmax,
    Identity,
}

impl Default for OutputActivationParam {
    fn default() -> Self {
        OutputActivationParam::Softmax
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputParams {
    /// Run directory; `--out` overrides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Emit per-epoch training-curve CSVs (winner of each step and the
    /// finetune phase).
    #[serde(default)]
    pub curves: bool,
    /// Emit the sample-to-split manifest CSV.
    #[serde(default)]
    pub split_manifest: bool,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}: {}", path.display(), e)))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("config {}: {}", path.display(), e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn algorithm_kind(&self) -> Result<AlgorithmKind, CliError> {
        AlgorithmKind::from_name(&self.algorithm).ok_or_else(|| {
            CliError::config(format!(
                "unknown algorithm '{}' (expected pop, popfast, popmem-h or popmem-o)",
                self.algorithm
            ))
        })
    }

    pub fn memory_fit(&self) -> Result<Option<MemoryFit>, CliError> {
        match self.memory_kind.as_deref() {
            None => Ok(None),
            Some("pca") => Ok(Some(MemoryFit::Pca {
                energy_threshold: self.pca.energy_threshold,
                ridge: self.pca.ridge,
            })),
            Some("lda") => Ok(Some(MemoryFit::Lda { ridge: self.lda.ridge })),
            Some(other) => Err(CliError::config(format!(
                "unknown memory_kind '{}' (expected pca or lda)",
                other
            ))),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let kind = self.algorithm_kind()?;
        if kind.uses_memory() && self.memory_kind.is_none() {
            return Err(CliError::config(format!(
                "algorithm '{}' requires the field memory_kind (pca or lda)",
                self.algorithm
            )));
        }
        self.memory_fit()?;
        let sum: f64 = self.split_fractions().iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CliError::config(format!(
                "data.split.fractions must sum to 1, got {}",
                sum
            )));
        }
        // Referenced paths must be distinct from the output directory.
        if let Some(dir) = &self.output.dir {
            let clash = match &self.data.source {
                DataSource::Csv { path, .. } => path == dir,
                DataSource::Gopm { features, labels } => features == dir || labels == dir,
                DataSource::Synthetic { .. } => false,
            };
            if clash {
                return Err(CliError::config(
                    "output.dir must be distinct from the data paths",
                ));
            }
        }
        Ok(())
    }

    pub fn split_fractions(&self) -> [f64; 3] {
        self.data.split.fractions
    }

    pub fn split_seed(&self) -> u64 {
        self.data.split.seed.unwrap_or(self.run_seed)
    }

    /// Builds the core progression config. Curve tracking follows the
    /// output options.
    pub fn to_progression(&self, template: NetworkTemplate) -> Result<ProgressionConfig, CliError> {
        let algorithm = self.algorithm_kind()?;
        let output_activation = match self.output_activation {
            OutputActivationParam::Softmax => OutputActivation::Softmax,
            OutputActivationParam::Identity => OutputActivation::Identity,
        };
        Ok(ProgressionConfig {
            algorithm,
            template,
            train: self.train.to_train_config(self.output.curves)?,
            finetune: match &self.finetune {
                None => None,
                Some(p) => Some(p.to_train_config(self.output.curves)?),
            },
            stopping: self.stopping.to_rule()?,
            memory: self.memory_fit()?,
            output_activation,
            run_seed: self.run_seed,
            workers: self.workers,
            standardize: self.data.standardize,
        })
    }

    /// The config echo stored in model manifests: everything needed to
    /// reproduce the model bitwise. Execution-only keys (`workers`,
    /// `output`) are stripped so the payload does not depend on them.
    pub fn echo(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("workers");
            map.remove("output");
        }
        value
    }
}
