//! Progressive layer-wise construction: POP with two-pass GIS, POPfast,
//! POPmem-H and POPmem-O, plus the relative-accuracy stopping rule and
//! final model assembly.
//!
//! Each step trains a pool of candidate SHLNs through the search executor,
//! keeps the argmin-loss winner (lowest operator-set index on ties), fixes
//! its hidden parameters, and either stops or advances the representation
//! to the next step. Whole-network finetuning runs once, after the
//! progression.

use std::time::Instant;

use crate::data::{Dataset, Matrix, Split, Standardizer};
use crate::error::{Error, Result};
use crate::layers::{
    concat_features, gop_forward, memory_apply, GopLayerParams, LinearLayerParams,
    MemoryProjection, OutputActivation,
};
use crate::memory::{fit_lda, fit_pca, LdaFitSpec, PcaFitSpec};
use crate::model::{AlgorithmKind, HiddenBlock, NetworkModel, OutputLayer};
use crate::num::rng::{RngStream, StreamId, StreamPurpose};
use crate::ops::{enumerate_library, OperatorSet, LIBRARY_SIZE};
use crate::search::{run_sweep, CandidateJob, SweepResult};
use crate::train::{accuracy, shln_forward, train_shln, TrainConfig, TrainResult};

/// Maximum architecture `[I, h_1 .. h_N, O]` bounding a progression. Every
/// hidden size must be at least 3 so 2-correlation pooling is evaluable at
/// every learned layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkTemplate {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub output_dim: usize,
}

impl NetworkTemplate {
    pub fn new(input_dim: usize, hidden_sizes: Vec<usize>, output_dim: usize) -> Result<Self> {
        let t = Self {
            input_dim,
            hidden_sizes,
            output_dim,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_sizes.is_empty() {
            return Err(Error::invalid("template needs at least one hidden layer"));
        }
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::invalid("template dims must be >= 1"));
        }
        if let Some(&h) = self.hidden_sizes.iter().find(|&&h| h < 3) {
            return Err(Error::invalid(format!(
                "hidden sizes must be >= 3 for 2-correlation pooling, got {}",
                h
            )));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.hidden_sizes.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopMode {
    /// Stop when `(A_l - A_{l-1}) / A_{l-1}` falls below the threshold;
    /// negative improvements stop as well.
    RelativeAccuracy { threshold: f64 },
    /// Stop when the step's best loss falls below epsilon.
    AbsoluteLoss { epsilon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricSplit {
    /// Use the validation split when it has samples, else fall back to
    /// train.
    Validation,
    Train,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub mode: StopMode,
    pub metric_split: MetricSplit,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self {
            mode: StopMode::RelativeAccuracy { threshold: 1e-4 },
            metric_split: MetricSplit::Validation,
        }
    }
}

impl StoppingRule {
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            StopMode::RelativeAccuracy { threshold } if !(threshold > 0.0) => {
                Err(Error::invalid("stopping threshold must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// Decides termination from the per-step history. The relative rule never
/// stops after the first step; a zero previous accuracy is a documented
/// degenerate case (continue only if the new accuracy is positive).
pub fn should_stop(history: &[StepRecord], rule: &StoppingRule) -> bool {
    let Some(last) = history.last() else {
        return false;
    };
    match rule.mode {
        StopMode::AbsoluteLoss { epsilon } => last.best_loss < epsilon,
        StopMode::RelativeAccuracy { threshold } => {
            if history.len() < 2 {
                return false;
            }
            let prev = history[history.len() - 2].accuracy;
            let cur = last.accuracy;
            if prev == 0.0 {
                return !(cur > 0.0);
            }
            (cur - prev) / prev < threshold
        }
    }
}

/// How to fit the memory path. `Null` produces a zero-width projection and
/// exists to ablate the memory variants back to plain POPfast.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MemoryFit {
    Pca { energy_threshold: f64, ridge: f64 },
    Lda { ridge: f64 },
    Null,
}

impl MemoryFit {
    pub fn pca_default() -> Self {
        let spec = PcaFitSpec::default();
        MemoryFit::Pca {
            energy_threshold: spec.energy_threshold,
            ridge: spec.ridge,
        }
    }

    pub fn lda_default() -> Self {
        MemoryFit::Lda {
            ridge: crate::memory::DEFAULT_RIDGE,
        }
    }

    fn fit(&self, x: &Matrix, labels: &[usize], class_count: usize) -> Result<MemoryProjection<f64>> {
        match *self {
            MemoryFit::Pca {
                energy_threshold,
                ridge,
            } => fit_pca(
                x,
                &PcaFitSpec {
                    energy_threshold,
                    ridge,
                },
            ),
            MemoryFit::Lda { ridge } => fit_lda(
                x,
                labels,
                &LdaFitSpec {
                    num_classes: class_count,
                    ridge,
                },
            ),
            MemoryFit::Null => Ok(MemoryProjection::null(x.cols())),
        }
    }
}

/// Full declarative description of one progressive run.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressionConfig {
    pub algorithm: AlgorithmKind,
    pub template: NetworkTemplate,
    pub train: TrainConfig,
    /// Whole-network finetuning after the progression; `None` skips it.
    pub finetune: Option<TrainConfig>,
    pub stopping: StoppingRule,
    /// Required for the memory variants.
    pub memory: Option<MemoryFit>,
    pub output_activation: OutputActivation,
    pub run_seed: u64,
    pub workers: usize,
    pub standardize: bool,
}

impl ProgressionConfig {
    pub fn validate(&self, data: &Dataset) -> Result<()> {
        self.template.validate()?;
        self.train.validate()?;
        if let Some(ft) = &self.finetune {
            ft.validate()?;
        }
        self.stopping.validate()?;
        if self.workers == 0 {
            return Err(Error::invalid("workers must be >= 1"));
        }
        if self.algorithm.uses_memory() && self.memory.is_none() {
            return Err(Error::invalid(format!(
                "memory_kind is required for algorithm {}",
                self.algorithm.name()
            )));
        }
        if self.template.input_dim != data.feature_dim() {
            return Err(Error::invalid(format!(
                "template input_dim {} != dataset feature dim {}",
                self.template.input_dim,
                data.feature_dim()
            )));
        }
        if self.template.output_dim != data.class_count() {
            return Err(Error::invalid(format!(
                "template output_dim {} != dataset class count {}",
                self.template.output_dim,
                data.class_count()
            )));
        }
        if data.indices_of(Split::Train).is_empty() {
            return Err(Error::invalid("dataset has no training samples"));
        }
        Ok(())
    }
}

/// One candidate line of a sweep report.
#[derive(Debug, Clone)]
pub struct CandidateRow {
    pub candidate_index: usize,
    pub opset: OperatorSet,
    pub loss: f64,
    pub seconds: f64,
    /// "ok" or the failure reason.
    pub status: String,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    /// e.g. "hidden", "gis-pass1-output".
    pub label: String,
    pub rows: Vec<CandidateRow>,
}

/// Training curves of a step winner or of the finetune phase.
#[derive(Debug, Clone, Default)]
pub struct CurveSet {
    pub lr: Vec<f64>,
    pub loss: Vec<f64>,
    pub train_acc: Vec<f64>,
    pub val_acc: Vec<f64>,
}

/// Everything recorded about one progressive step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// 1-based step index.
    pub step: usize,
    /// Candidate trainings executed in this step (72, or 288 for POP).
    pub candidates: usize,
    pub opset: OperatorSet,
    pub best_loss: f64,
    /// Accuracy on the stopping split after this step's winner.
    pub accuracy: f64,
    pub stopped: bool,
    pub seconds: f64,
    /// Width of the SHLN input representation at this step.
    pub shln_input_width: usize,
    /// Fan-in of the SHLN output layer at this step.
    pub output_fan_in: usize,
    /// Memory dimension involved at this step (input side for POPmem-H,
    /// hidden/output side for POPmem-O; 0 otherwise).
    pub memory_dim: usize,
    pub failures: usize,
    /// POP only: the logged random library draw opening the step.
    pub gis_draw: Option<usize>,
    pub sweeps: Vec<SweepTable>,
    pub winner_curves: CurveSet,
}

#[derive(Debug, Clone, Default)]
pub struct FinetuneSummary {
    pub final_loss: f64,
    pub curves: CurveSet,
    pub memory_update_count: usize,
}

/// Full accounting of one progressive run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub algorithm: AlgorithmKind,
    pub steps: Vec<StepRecord>,
    pub total_candidates: usize,
    pub finetune: Option<FinetuneSummary>,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub seconds_total: f64,
}

impl RunReport {
    /// Seconds per learned layer, the headline cost metric.
    pub fn seconds_per_layer(&self) -> f64 {
        let steps: f64 = self.steps.iter().map(|s| s.seconds).sum();
        steps / self.steps.len().max(1) as f64
    }
}

/// Assembles the immutable model, validating the variant's wiring.
pub fn assemble_model(
    kind: AlgorithmKind,
    blocks: Vec<HiddenBlock<f64>>,
    output: OutputLayer<f64>,
    standardizer: Option<Standardizer<f64>>,
) -> Result<NetworkModel<f64>> {
    if blocks.is_empty() {
        return Err(Error::Contract("cannot assemble a model with no hidden blocks".into()));
    }
    let last = blocks.len() - 1;
    for (k, b) in blocks.iter().enumerate() {
        let needs_memory = match kind {
            AlgorithmKind::Pop | AlgorithmKind::PopFast => false,
            AlgorithmKind::PopMemH => k != last,
            AlgorithmKind::PopMemO => true,
        };
        if needs_memory && b.memory.is_none() {
            return Err(Error::Contract(format!(
                "{} block {} is missing its memory projection",
                kind.name(),
                k
            )));
        }
        if !needs_memory && kind != AlgorithmKind::PopMemH && b.memory.is_some() {
            return Err(Error::Contract(format!(
                "{} block {} must not carry a memory projection",
                kind.name(),
                k
            )));
        }
    }
    Ok(NetworkModel {
        kind,
        blocks,
        output,
        standardizer,
    })
}

struct SweepSetup<'a> {
    rep_train: &'a Matrix,
    y_train: &'a Matrix,
    val: Option<(&'a Matrix, &'a Matrix)>,
    hidden_width: usize,
    output_dim: usize,
    memory: Option<&'a MemoryProjection<f64>>,
}

/// Which layer a sweep iterates the library over.
#[derive(Clone, Copy)]
enum SweepKind {
    /// Hidden opset from the job, linear output (POPfast family).
    HiddenWithLinearOutput,
    /// Hidden opset from the job, GOP output with a pinned opset (POP
    /// hidden sweeps).
    HiddenWithGopOutput(OperatorSet),
    /// Hidden opset pinned, GOP output opset from the job (POP output
    /// sweeps).
    GopOutput { hidden: OperatorSet },
}

/// Runs one full-library sweep: a fresh SHLN per candidate, trained for the
/// configured epochs, losses aggregated by the search executor.
fn sweep_candidates(
    cfg: &ProgressionConfig,
    setup: &SweepSetup<'_>,
    step: usize,
    sweep_ordinal: usize,
    kind: SweepKind,
) -> Result<SweepResult<TrainResult<f64>>> {
    let library = enumerate_library();
    let jobs: Vec<CandidateJob> = library
        .iter()
        .map(|&opset| CandidateJob::new(step, sweep_ordinal, opset.index, opset))
        .collect();

    let runner = |job: &CandidateJob| -> Result<(f64, TrainResult<f64>)> {
        let mut rng = RngStream::new(cfg.run_seed, job.rng_stream_id);
        let hidden_set = match kind {
            SweepKind::GopOutput { hidden } => hidden,
            _ => job.opset,
        };
        let hidden =
            GopLayerParams::init(setup.rep_train.cols(), setup.hidden_width, hidden_set, &mut rng)?;
        let mem_dim = setup.memory.map_or(0, |m| m.out_dim());
        let output_fan_in = setup.hidden_width + mem_dim;
        let output = match kind {
            SweepKind::HiddenWithLinearOutput => OutputLayer::Linear(LinearLayerParams::init(
                output_fan_in,
                setup.output_dim,
                cfg.output_activation,
                &mut rng,
            )?),
            SweepKind::HiddenWithGopOutput(set) => {
                OutputLayer::Gop(GopLayerParams::init(output_fan_in, setup.output_dim, set, &mut rng)?)
            }
            SweepKind::GopOutput { .. } => OutputLayer::Gop(GopLayerParams::init(
                output_fan_in,
                setup.output_dim,
                job.opset,
                &mut rng,
            )?),
        };
        let result = train_shln(
            hidden,
            output,
            setup.memory,
            setup.rep_train,
            setup.y_train,
            setup.val,
            &cfg.train,
            &mut rng,
        )?;
        Ok((result.final_loss, result))
    };

    run_sweep(&jobs, cfg.workers, runner)
}

fn sweep_table(label: &str, sweep: &SweepResult<TrainResult<f64>>) -> SweepTable {
    let library = enumerate_library();
    let rows = (0..sweep.losses.len())
        .map(|i| CandidateRow {
            candidate_index: i,
            opset: library[i],
            loss: sweep.losses[i],
            seconds: sweep.seconds[i],
            status: sweep
                .failures
                .iter()
                .find(|f| f.candidate_index == i)
                .map_or_else(|| "ok".to_string(), |f| f.reason.clone()),
        })
        .collect();
    SweepTable {
        label: label.to_string(),
        rows,
    }
}

fn curves_of(result: &TrainResult<f64>) -> CurveSet {
    CurveSet {
        lr: result.lr_curve.clone(),
        loss: result.loss_curve.clone(),
        train_acc: result.train_acc_curve.clone(),
        val_acc: result.val_acc_curve.clone(),
    }
}

fn progression_error(step: usize, sweep: &SweepResult<TrainResult<f64>>) -> Error {
    let sample: Vec<String> = sweep
        .failures
        .iter()
        .take(3)
        .map(|f| format!("#{}: {}", f.candidate_index, f.reason))
        .collect();
    Error::Progression {
        step,
        detail: format!(
            "all {} candidates failed; first failures: {}",
            sweep.losses.len(),
            sample.join("; ")
        ),
    }
}

/// Runs the configured progressive algorithm over the dataset's training
/// split, evaluates the stopping rule per step, finetunes if configured and
/// returns the assembled model with the run report.
pub fn run_progression(data: &Dataset, cfg: &ProgressionConfig) -> Result<(NetworkModel<f64>, RunReport)> {
    cfg.validate(data)?;
    let run_start = Instant::now();

    let standardizer = cfg.standardize.then(|| data.fit_standardizer());
    let transform = |m: &Matrix| -> Result<Matrix> {
        match &standardizer {
            Some(s) => s.transform(m),
            None => Ok(m.clone()),
        }
    };

    let (x_train_raw, y_train, train_labels) = data.part(Split::Train);
    let x_train = transform(&x_train_raw)?;
    let (x_val_raw, y_val, _) = data.part(Split::Val);
    let has_val = x_val_raw.rows() > 0;
    let x_val = transform(&x_val_raw)?;

    // The stopping metric uses validation when present and requested.
    let use_val_metric = has_val && cfg.stopping.metric_split == MetricSplit::Validation;

    let mut rep_train = x_train.clone();
    let mut rep_val = x_val.clone();
    let mut blocks: Vec<HiddenBlock<f64>> = Vec::new();
    let mut output_layer: Option<OutputLayer<f64>> = None;
    let mut history: Vec<StepRecord> = Vec::new();
    let mut total_candidates = 0usize;

    let depth = cfg.template.depth();
    for k in 0..depth {
        let step_start = Instant::now();
        let step = k + 1;
        let hidden_width = cfg.template.hidden_sizes[k];
        let mut sweeps: Vec<SweepTable> = Vec::new();
        let mut gis_draw = None;
        let mut step_memory: Option<MemoryProjection<f64>> = None;

        // Memory handling before the sweep.
        match cfg.algorithm {
            AlgorithmKind::PopMemH if k >= 1 => {
                // Lazy fit of G_{k-1} on X_{k-1}, then advance the
                // representation to X_k = [F_{k-1}(X_{k-1}), G_{k-1}(X_{k-1})].
                let fit = cfg.memory.unwrap();
                let prev_rep_train = rep_train.clone();
                let proj = fit
                    .fit(&prev_rep_train, &train_labels, data.class_count())
                    .map_err(|e| Error::Progression {
                        step,
                        detail: format!("memory fit failed: {}", e),
                    })?;
                let prev_block = blocks.last_mut().expect("step k >= 1 has a block");
                let (y_tr, _) = gop_forward(&prev_block.gop, &prev_rep_train)?;
                rep_train = concat_features(&y_tr, &memory_apply(&proj, &prev_rep_train)?)?;
                if has_val {
                    let (y_va, _) = gop_forward(&prev_block.gop, &rep_val)?;
                    rep_val = concat_features(&y_va, &memory_apply(&proj, &rep_val)?)?;
                }
                prev_block.memory = Some(proj);
            }
            AlgorithmKind::PopMemO => {
                // Eager fit of G_k on X_k before the sweep.
                let fit = cfg.memory.unwrap();
                let proj = fit
                    .fit(&rep_train, &train_labels, data.class_count())
                    .map_err(|e| Error::Progression {
                        step,
                        detail: format!("memory fit failed: {}", e),
                    })?;
                step_memory = Some(proj);
            }
            _ => {}
        }

        let setup = SweepSetup {
            rep_train: &rep_train,
            y_train: &y_train,
            val: (cfg.train.track_accuracy && has_val).then_some((&rep_val, &y_val)),
            hidden_width,
            output_dim: cfg.template.output_dim,
            memory: step_memory.as_ref(),
        };

        // The sweeps of this step, ending with the winning SHLN.
        let winner: TrainResult<f64> = match cfg.algorithm {
            AlgorithmKind::PopFast | AlgorithmKind::PopMemH | AlgorithmKind::PopMemO => {
                let mut sweep =
                    sweep_candidates(cfg, &setup, step, 0, SweepKind::HiddenWithLinearOutput)?;
                total_candidates += sweep.losses.len();
                sweeps.push(sweep_table("hidden", &sweep));
                if sweep.all_failed() {
                    return Err(progression_error(step, &sweep));
                }
                sweep.winner.take().unwrap()
            }
            AlgorithmKind::Pop => {
                // Two-pass GIS: the opening hidden opset is a logged random
                // library draw from a dedicated stream.
                let mut draw_rng = RngStream::new(
                    cfg.run_seed,
                    StreamId::new(StreamPurpose::GisDraw, step, 0, 0),
                );
                let mut hidden_set =
                    OperatorSet::from_index(draw_rng.index(LIBRARY_SIZE)).unwrap();
                gis_draw = Some(hidden_set.index);

                let mut final_winner: Option<TrainResult<f64>> = None;
                for pass in 0..2 {
                    // Output sweep: hidden fixed, GOP output opset swept.
                    let out_sweep = sweep_candidates(
                        cfg,
                        &setup,
                        step,
                        pass * 2,
                        SweepKind::GopOutput { hidden: hidden_set },
                    )?;
                    total_candidates += out_sweep.losses.len();
                    sweeps.push(sweep_table(&format!("gis-pass{}-output", pass + 1), &out_sweep));
                    if out_sweep.all_failed() {
                        return Err(progression_error(step, &out_sweep));
                    }
                    let output_set = OperatorSet::from_index(out_sweep.winner_index).unwrap();

                    // Hidden sweep: output fixed, hidden opset swept.
                    let mut hid_sweep = sweep_candidates(
                        cfg,
                        &setup,
                        step,
                        pass * 2 + 1,
                        SweepKind::HiddenWithGopOutput(output_set),
                    )?;
                    total_candidates += hid_sweep.losses.len();
                    sweeps.push(sweep_table(&format!("gis-pass{}-hidden", pass + 1), &hid_sweep));
                    if hid_sweep.all_failed() {
                        return Err(progression_error(step, &hid_sweep));
                    }
                    hidden_set = OperatorSet::from_index(hid_sweep.winner_index).unwrap();
                    final_winner = Some(hid_sweep.winner.take().unwrap());
                }
                final_winner.unwrap()
            }
        };

        let failures: usize = sweeps
            .iter()
            .map(|t| t.rows.iter().filter(|r| r.status != "ok").count())
            .sum();
        let step_candidates: usize = sweeps.iter().map(|t| t.rows.len()).sum();

        // Accuracy of the network-so-far (previous blocks plus this SHLN)
        // on the stopping split, before any finetuning.
        let (metric_x, metric_y) = if use_val_metric {
            (&rep_val, &y_val)
        } else {
            (&rep_train, &y_train)
        };
        let metric_pred = shln_forward(&winner.hidden, &winner.output, step_memory.as_ref(), metric_x)?;
        let step_accuracy = accuracy(&metric_pred, metric_y);

        let record = StepRecord {
            step,
            candidates: step_candidates,
            opset: winner.hidden.opset,
            best_loss: winner.final_loss,
            accuracy: step_accuracy,
            stopped: false,
            seconds: step_start.elapsed().as_secs_f64(),
            shln_input_width: rep_train.cols(),
            output_fan_in: winner.output.fan_in(),
            memory_dim: match cfg.algorithm {
                AlgorithmKind::PopMemH => blocks.last().map_or(0, |b| {
                    b.memory.as_ref().map_or(0, |m| m.out_dim())
                }),
                AlgorithmKind::PopMemO => step_memory.as_ref().map_or(0, |m| m.out_dim()),
                _ => 0,
            },
            failures,
            gis_draw,
            sweeps,
            winner_curves: curves_of(&winner),
        };
        history.push(record);

        let stop = should_stop(&history, &cfg.stopping);
        history.last_mut().unwrap().stopped = stop;

        log::info!(
            "step {}: {} candidates, best {} loss {:.6}, accuracy {:.4}, stop {}, {:.2}s",
            step,
            step_candidates,
            winner.hidden.opset,
            winner.final_loss,
            step_accuracy,
            stop,
            history.last().unwrap().seconds
        );

        // Fix the winner's hidden parameters.
        blocks.push(HiddenBlock {
            gop: winner.hidden,
            memory: step_memory,
        });
        output_layer = Some(winner.output);

        if stop || k == depth - 1 {
            break;
        }

        // Advance the representation; the output layer is discarded and
        // re-learned at the next step.
        match cfg.algorithm {
            AlgorithmKind::Pop | AlgorithmKind::PopFast => {
                let block = blocks.last().unwrap();
                rep_train = gop_forward(&block.gop, &rep_train)?.0;
                if has_val {
                    rep_val = gop_forward(&block.gop, &rep_val)?.0;
                }
            }
            AlgorithmKind::PopMemH => {
                // X_{k+1} is built lazily at the start of the next step,
                // after G_k is fitted on X_k.
            }
            AlgorithmKind::PopMemO => {
                let block = blocks.last().unwrap();
                let proj = block.memory.as_ref().unwrap();
                let (y_tr, _) = gop_forward(&block.gop, &rep_train)?;
                let next_train = concat_features(&y_tr, &memory_apply(proj, &rep_train)?)?;
                rep_train = next_train;
                if has_val {
                    let (y_va, _) = gop_forward(&block.gop, &rep_val)?;
                    rep_val = concat_features(&y_va, &memory_apply(proj, &rep_val)?)?;
                }
            }
        }
    }

    let model = assemble_model(
        cfg.algorithm,
        blocks,
        output_layer.expect("at least one step ran"),
        standardizer,
    )?;

    // Post-progression whole-network finetuning.
    let (model, finetune) = match &cfg.finetune {
        None => (model, None),
        Some(ft_cfg) => {
            let mut rng = RngStream::new(cfg.run_seed, StreamId::simple(StreamPurpose::Finetune));
            let val = (ft_cfg.track_accuracy && has_val).then_some((&x_val_raw, &y_val));
            let (model, report) =
                crate::train::finetune_network(model, &x_train_raw, &y_train, val, ft_cfg, &mut rng)?;
            let summary = FinetuneSummary {
                final_loss: report.final_loss,
                curves: CurveSet {
                    lr: report.lr_curve,
                    loss: report.loss_curve,
                    train_acc: report.train_acc_curve,
                    val_acc: report.val_acc_curve,
                },
                memory_update_count: report.memory_update_count,
            };
            (model, Some(summary))
        }
    };

    let train_accuracy = accuracy(&model.forward(&x_train_raw)?, &y_train);
    let val_accuracy = if has_val {
        Some(accuracy(&model.forward(&x_val_raw)?, &y_val))
    } else {
        None
    };
    let (x_test_raw, y_test, _) = data.part(Split::Test);
    let test_accuracy = if x_test_raw.rows() > 0 {
        Some(accuracy(&model.forward(&x_test_raw)?, &y_test))
    } else {
        None
    };

    let report = RunReport {
        algorithm: cfg.algorithm,
        steps: history,
        total_candidates,
        finetune,
        train_accuracy,
        val_accuracy,
        test_accuracy,
        seconds_total: run_start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

/// POP: two-pass greedy iterative search per step, GOP output layers.
pub fn run_pop(data: &Dataset, cfg: &ProgressionConfig) -> Result<(NetworkModel<f64>, RunReport)> {
    run_progression(data, &with_kind(cfg, AlgorithmKind::Pop))
}

/// POPfast: linear output relaxation, one 72-candidate sweep per step.
pub fn run_popfast(data: &Dataset, cfg: &ProgressionConfig) -> Result<(NetworkModel<f64>, RunReport)> {
    run_progression(data, &with_kind(cfg, AlgorithmKind::PopFast))
}

/// POPmem-H: memory concatenated into the next step's input.
pub fn run_popmem_h(data: &Dataset, cfg: &ProgressionConfig) -> Result<(NetworkModel<f64>, RunReport)> {
    run_progression(data, &with_kind(cfg, AlgorithmKind::PopMemH))
}

/// POPmem-O: memory concatenated into the hidden representation, visible
/// to the output layer.
pub fn run_popmem_o(data: &Dataset, cfg: &ProgressionConfig) -> Result<(NetworkModel<f64>, RunReport)> {
    run_progression(data, &with_kind(cfg, AlgorithmKind::PopMemO))
}

fn with_kind(cfg: &ProgressionConfig, kind: AlgorithmKind) -> ProgressionConfig {
    ProgressionConfig {
        algorithm: kind,
        ..cfg.clone()
    }
}
