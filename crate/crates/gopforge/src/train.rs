//! Mini-batch SGD for one SHLN and for whole-network finetuning: losses,
//! the stepped learning-rate schedule, inverted dropout, weight decay and
//! the max-norm constraint.
//!
//! A training run owns its parameters and its random stream; divergence
//! (NaN/Inf loss) is reported as an error carrying the epoch index so sweep
//! callers can record the candidate as failed instead of aborting.

use crate::error::{Error, Result};
use crate::layers::{
    gop_backward, gop_forward, linear_backward_from_logits, linear_forward, memory_apply,
    memory_backward, output_grad_to_logits, GopLayerParams, MemoryProjection, OutputActivation,
};
use crate::model::{AlgorithmKind, NetworkModel, OutputLayer};
use crate::num::matrix::DenseMatrix;
use crate::num::rng::RngStream;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Mean over samples and outputs of the squared error. The default,
    /// applied to softmax outputs for classification.
    Mse,
    /// Mean negative log-likelihood against softmax outputs; valid only
    /// with a linear softmax output layer.
    CrossEntropy,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::CrossEntropy => "cross_entropy",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "mse" => Some(LossKind::Mse),
            "cross_entropy" => Some(LossKind::CrossEntropy),
            _ => None,
        }
    }
}

/// Weight regularization; biases are exempt in every mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    /// Gradient penalty `lambda * w` per step.
    WeightDecay(f64),
    /// After every update, each neuron's incoming weight vector is rescaled
    /// to norm at most `c`.
    MaxNorm(f64),
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_initial: f64,
    /// Epoch interval between multiplicative drops; 0 disables the drop.
    pub lr_drop_every: usize,
    pub lr_drop_factor: f64,
    pub batch_size: usize,
    /// Fraction of hidden activations dropped each training step
    /// (inverted dropout); disabled at evaluation.
    pub dropout_rate: f64,
    pub regularizer: Regularizer,
    pub loss: LossKind,
    /// Classical momentum; 0 (the default) is plain SGD.
    pub momentum: f64,
    /// Record train/val accuracy per epoch for curve reports.
    pub track_accuracy: bool,
}

impl Default for TrainConfig {
    /// Operator-search phase defaults: 300 epochs at 0.01 dropping by 10x
    /// every 100 epochs, batch 32, 50% dropout, weight decay 1e-4.
    fn default() -> Self {
        Self {
            epochs: 300,
            lr_initial: 0.01,
            lr_drop_every: 100,
            lr_drop_factor: 0.1,
            batch_size: 32,
            dropout_rate: 0.5,
            regularizer: Regularizer::WeightDecay(1e-4),
            loss: LossKind::Mse,
            momentum: 0.0,
            track_accuracy: false,
        }
    }
}

impl TrainConfig {
    /// Post-progression finetuning defaults: 200 epochs at 1e-4 dropping to
    /// 1e-5 after 100.
    pub fn finetune_default() -> Self {
        Self {
            epochs: 200,
            lr_initial: 1e-4,
            lr_drop_every: 100,
            lr_drop_factor: 0.1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if !(self.lr_initial >= 0.0) {
            return Err(Error::invalid("lr_initial must be non-negative"));
        }
        if !(self.lr_drop_factor > 0.0 && self.lr_drop_factor <= 1.0) {
            return Err(Error::invalid("lr_drop_factor must be in (0, 1]"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid("dropout_rate must be in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must be in [0, 1)"));
        }
        match self.regularizer {
            Regularizer::WeightDecay(l) if l < 0.0 => {
                return Err(Error::invalid("weight decay must be >= 0"))
            }
            Regularizer::MaxNorm(c) if !(c > 0.0) => {
                return Err(Error::invalid("max-norm bound must be positive"))
            }
            _ => {}
        }
        Ok(())
    }

    /// Piecewise-constant, non-increasing schedule:
    /// `lr_initial * factor^floor(epoch / drop_every)`. A zero initial rate
    /// freezes all parameters (degenerate schedule).
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if self.lr_drop_every == 0 {
            return self.lr_initial;
        }
        self.lr_initial * self.lr_drop_factor.powi((epoch / self.lr_drop_every) as i32)
    }
}

/// Mean loss over a batch of predictions.
pub fn loss_forward<S: Scalar>(
    loss: LossKind,
    predictions: &DenseMatrix<S>,
    targets: &DenseMatrix<S>,
) -> Result<f64> {
    if predictions.rows() != targets.rows() || predictions.cols() != targets.cols() {
        return Err(Error::shape(
            "loss_forward",
            format!(
                "{}x{} predictions vs {}x{} targets",
                predictions.rows(),
                predictions.cols(),
                targets.rows(),
                targets.cols()
            ),
        ));
    }
    let n = predictions.rows().max(1) as f64;
    match loss {
        LossKind::Mse => {
            let mut acc = 0.0;
            for (p, t) in predictions.data().iter().zip(targets.data()) {
                let d = (*p - *t).to_f64().unwrap();
                acc += d * d;
            }
            Ok(acc / (n * predictions.cols().max(1) as f64))
        }
        LossKind::CrossEntropy => {
            let mut acc = 0.0;
            for (p, t) in predictions.data().iter().zip(targets.data()) {
                let t = t.to_f64().unwrap();
                if t != 0.0 {
                    let p = p.to_f64().unwrap().max(1e-300);
                    acc -= t * p.ln();
                }
            }
            Ok(acc / n)
        }
    }
}

/// Gradient of the mean loss. For `Mse` the gradient is with respect to the
/// predictions; for `CrossEntropy` it is the fused softmax gradient with
/// respect to the logits, `(p - t) / n`.
pub fn loss_backward<S: Scalar>(
    loss: LossKind,
    predictions: &DenseMatrix<S>,
    targets: &DenseMatrix<S>,
) -> Result<DenseMatrix<S>> {
    if predictions.rows() != targets.rows() || predictions.cols() != targets.cols() {
        return Err(Error::shape(
            "loss_backward",
            format!(
                "{}x{} predictions vs {}x{} targets",
                predictions.rows(),
                predictions.cols(),
                targets.rows(),
                targets.cols()
            ),
        ));
    }
    let n = S::of(predictions.rows().max(1) as f64);
    match loss {
        LossKind::Mse => {
            let scale = S::of(2.0) / (n * S::of(predictions.cols().max(1) as f64));
            Ok(predictions.sub(targets)?.scale(scale))
        }
        LossKind::CrossEntropy => Ok(predictions.sub(targets)?.scale(S::one() / n)),
    }
}

/// Fraction of rows whose argmax matches the target's argmax.
pub fn accuracy<S: Scalar>(predictions: &DenseMatrix<S>, targets: &DenseMatrix<S>) -> f64 {
    debug_assert_eq!(predictions.rows(), targets.rows());
    if predictions.rows() == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    for r in 0..predictions.rows() {
        if argmax(predictions.row(r)) == argmax(targets.row(r)) {
            hits += 1;
        }
    }
    hits as f64 / predictions.rows() as f64
}

pub fn argmax<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Momentum velocity for one (weights, bias) tensor pair.
struct Velocity<S: Scalar> {
    weights: DenseMatrix<S>,
    bias: Vec<S>,
}

impl<S: Scalar> Velocity<S> {
    fn like(weights: &DenseMatrix<S>, bias: &[S]) -> Self {
        Self {
            weights: DenseMatrix::zeros(weights.rows(), weights.cols()),
            bias: vec![S::zero(); bias.len()],
        }
    }
}

/// One SGD step on a (weights, bias) pair. Weight decay is added to the
/// weight gradient only; the max-norm clamp rescales each column (a
/// neuron's incoming weights) after the update.
fn sgd_step<S: Scalar>(
    weights: &mut DenseMatrix<S>,
    bias: &mut [S],
    wgrad: &DenseMatrix<S>,
    bgrad: &[S],
    vel: Option<&mut Velocity<S>>,
    lr: f64,
    cfg: &TrainConfig,
) {
    let lr_s = S::of(lr);
    let decay = match cfg.regularizer {
        Regularizer::WeightDecay(l) => S::of(l),
        _ => S::zero(),
    };
    match vel {
        Some(v) => {
            let mu = S::of(cfg.momentum);
            for ((w, g), vw) in weights
                .data_mut()
                .iter_mut()
                .zip(wgrad.data())
                .zip(v.weights.data_mut())
            {
                *vw = mu * *vw + *g + decay * *w;
                *w -= lr_s * *vw;
            }
            for ((b, g), vb) in bias.iter_mut().zip(bgrad).zip(v.bias.iter_mut()) {
                *vb = mu * *vb + *g;
                *b -= lr_s * *vb;
            }
        }
        None => {
            for (w, g) in weights.data_mut().iter_mut().zip(wgrad.data()) {
                *w -= lr_s * (*g + decay * *w);
            }
            for (b, g) in bias.iter_mut().zip(bgrad) {
                *b -= lr_s * *g;
            }
        }
    }
    if let Regularizer::MaxNorm(c) = cfg.regularizer {
        clamp_column_norms(weights, S::of(c));
    }
}

fn clamp_column_norms<S: Scalar>(weights: &mut DenseMatrix<S>, c: S) {
    for col in 0..weights.cols() {
        let mut sq = S::zero();
        for r in 0..weights.rows() {
            let v = weights[(r, col)];
            sq += v * v;
        }
        let norm = sq.sqrt();
        if norm > c {
            let scale = c / norm;
            for r in 0..weights.rows() {
                weights[(r, col)] *= scale;
            }
        }
    }
}

/// Inverted-dropout mask: kept entries are scaled by `1 / (1 - rate)` so
/// the expectation matches the undropped activations. No draws are consumed
/// when the rate is zero.
fn dropout_mask<S: Scalar>(rows: usize, cols: usize, rate: f64, rng: &mut RngStream) -> Option<DenseMatrix<S>> {
    if rate == 0.0 {
        return None;
    }
    let keep_scale = S::of(1.0 / (1.0 - rate));
    let mut mask = DenseMatrix::zeros(rows, cols);
    for v in mask.data_mut() {
        if rng.unit() >= rate {
            *v = keep_scale;
        }
    }
    Some(mask)
}

fn apply_mask<S: Scalar>(m: &DenseMatrix<S>, mask: Option<&DenseMatrix<S>>) -> DenseMatrix<S> {
    match mask {
        None => m.clone(),
        Some(mask) => {
            let mut out = m.clone();
            for (v, k) in out.data_mut().iter_mut().zip(mask.data()) {
                *v *= *k;
            }
            out
        }
    }
}

/// Everything a finished training run reports. The trained parameters are
/// returned by value; the curves feed the CSV reports.
pub struct TrainResult<S: Scalar> {
    pub hidden: GopLayerParams<S>,
    pub output: OutputLayer<S>,
    pub final_loss: f64,
    pub loss_curve: Vec<f64>,
    pub lr_curve: Vec<f64>,
    pub train_acc_curve: Vec<f64>,
    pub val_acc_curve: Vec<f64>,
    pub epochs_run: usize,
    /// Gradient updates applied to memory-projection parameters. There is
    /// no code path that performs one; the counter documents the frozen
    /// contract and is asserted to stay zero.
    pub memory_update_count: usize,
}

fn check_loss_output_pair<S: Scalar>(loss: LossKind, output: &OutputLayer<S>) -> Result<()> {
    if loss == LossKind::CrossEntropy {
        match output {
            OutputLayer::Linear(p) if p.activation == OutputActivation::Softmax => {}
            _ => {
                return Err(Error::invalid(
                    "cross-entropy loss requires a linear softmax output layer",
                ))
            }
        }
    }
    Ok(())
}

/// Evaluation-mode SHLN forward (no dropout): one GOP hidden layer, an
/// optional frozen memory path concatenated to its output, and the output
/// layer.
pub fn shln_forward<S: Scalar>(
    hidden: &GopLayerParams<S>,
    output: &OutputLayer<S>,
    memory: Option<&MemoryProjection<S>>,
    x: &DenseMatrix<S>,
) -> Result<DenseMatrix<S>> {
    let (yh, _) = gop_forward(hidden, x)?;
    let rep = match memory {
        Some(m) => yh.hstack(&memory_apply(m, x)?)?,
        None => yh,
    };
    Ok(match output {
        OutputLayer::Linear(p) => linear_forward(p, &rep)?.0,
        OutputLayer::Gop(p) => gop_forward(p, &rep)?.0,
    })
}

/// Trains a single hidden layer network: one GOP hidden layer and an output
/// layer (linear for POPfast-family, GOP for POP), with an optional frozen
/// memory projection concatenated to the hidden representation (POPmem-O).
/// The projection receives no updates.
#[allow(clippy::too_many_arguments)]
pub fn train_shln<S: Scalar>(
    hidden: GopLayerParams<S>,
    output: OutputLayer<S>,
    memory: Option<&MemoryProjection<S>>,
    x: &DenseMatrix<S>,
    y: &DenseMatrix<S>,
    val: Option<(&DenseMatrix<S>, &DenseMatrix<S>)>,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<TrainResult<S>> {
    cfg.validate()?;
    check_loss_output_pair(cfg.loss, &output)?;
    if x.rows() != y.rows() {
        return Err(Error::shape(
            "train_shln",
            format!("{} input rows vs {} target rows", x.rows(), y.rows()),
        ));
    }
    if x.cols() != hidden.fan_in() {
        return Err(Error::shape(
            "train_shln",
            format!("input has {} columns, hidden layer expects {}", x.cols(), hidden.fan_in()),
        ));
    }
    let mem_dim = memory.map_or(0, |m| m.out_dim());
    if let Some(m) = memory {
        if m.in_dim() != x.cols() {
            return Err(Error::shape(
                "train_shln",
                format!("memory projects {} dims, input has {}", m.in_dim(), x.cols()),
            ));
        }
    }
    if output.fan_in() != hidden.fan_out() + mem_dim {
        return Err(Error::shape(
            "train_shln",
            format!(
                "output fan_in {} != hidden {} + memory {}",
                output.fan_in(),
                hidden.fan_out(),
                mem_dim
            ),
        ));
    }

    let mut hidden = hidden;
    let mut output = output;
    let n = x.rows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut hidden_vel =
        (cfg.momentum > 0.0).then(|| Velocity::like(&hidden.weights, &hidden.bias));
    let mut output_vel = (cfg.momentum > 0.0).then(|| match &output {
        OutputLayer::Linear(p) => Velocity::like(&p.weights, &p.bias),
        OutputLayer::Gop(p) => Velocity::like(&p.weights, &p.bias),
    });

    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut lr_curve = Vec::with_capacity(cfg.epochs);
    let mut train_acc_curve = Vec::new();
    let mut val_acc_curve = Vec::new();

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;

        for batch in order.chunks(cfg.batch_size) {
            let xb = x.select_rows(batch);
            let yb = y.select_rows(batch);

            let step = (|| -> Result<f64> {
                let (yh, hcache) = gop_forward(&hidden, &xb)?;
                let mask = dropout_mask::<S>(yh.rows(), yh.cols(), cfg.dropout_rate, rng);
                let yh_dropped = apply_mask(&yh, mask.as_ref());
                let rep = match memory {
                    Some(m) => yh_dropped.hstack(&memory_apply(m, &xb)?)?,
                    None => yh_dropped,
                };

                let (batch_loss, rep_grad, out_w, out_b) = match &output {
                    OutputLayer::Linear(p) => {
                        let (pred, cache) = linear_forward(p, &rep)?;
                        let batch_loss = loss_forward(cfg.loss, &pred, &yb)?;
                        let dlogits = match cfg.loss {
                            LossKind::CrossEntropy => loss_backward(cfg.loss, &pred, &yb)?,
                            LossKind::Mse => {
                                let dout = loss_backward(cfg.loss, &pred, &yb)?;
                                output_grad_to_logits(p, &cache, &dout)
                            }
                        };
                        let grads = linear_backward_from_logits(p, &cache, &dlogits)?;
                        (batch_loss, grads.input, grads.weights, grads.bias)
                    }
                    OutputLayer::Gop(p) => {
                        let (pred, cache) = gop_forward(p, &rep)?;
                        let batch_loss = loss_forward(cfg.loss, &pred, &yb)?;
                        let dout = loss_backward(cfg.loss, &pred, &yb)?;
                        let grads = gop_backward(p, &cache, &dout)?;
                        (batch_loss, grads.input, grads.weights, grads.bias)
                    }
                };

                // Gradient w.r.t. the raw hidden output: take the GOP
                // columns of the representation gradient and undo the mask.
                let h = hidden.fan_out();
                let mut yh_grad = DenseMatrix::zeros(rep_grad.rows(), h);
                for r in 0..rep_grad.rows() {
                    yh_grad.row_mut(r).copy_from_slice(&rep_grad.row(r)[..h]);
                }
                let yh_grad = apply_mask(&yh_grad, mask.as_ref());
                let hgrads = gop_backward(&hidden, &hcache, &yh_grad)?;

                match &mut output {
                    OutputLayer::Linear(p) => sgd_step(
                        &mut p.weights,
                        &mut p.bias,
                        &out_w,
                        &out_b,
                        output_vel.as_mut(),
                        lr,
                        cfg,
                    ),
                    OutputLayer::Gop(p) => sgd_step(
                        &mut p.weights,
                        &mut p.bias,
                        &out_w,
                        &out_b,
                        output_vel.as_mut(),
                        lr,
                        cfg,
                    ),
                }
                sgd_step(
                    &mut hidden.weights,
                    &mut hidden.bias,
                    &hgrads.weights,
                    &hgrads.bias,
                    hidden_vel.as_mut(),
                    lr,
                    cfg,
                );
                Ok(batch_loss)
            })();

            match step {
                Ok(batch_loss) => epoch_loss += batch_loss * batch.len() as f64 / n as f64,
                Err(e) => {
                    return Err(Error::Diverged {
                        epoch,
                        detail: e.to_string(),
                    })
                }
            }
        }

        if !epoch_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("epoch training loss is {}", epoch_loss),
            });
        }
        loss_curve.push(epoch_loss);
        lr_curve.push(lr);
        if cfg.track_accuracy {
            let pred = shln_forward(&hidden, &output, memory, x)?;
            train_acc_curve.push(accuracy(&pred, y));
            if let Some((xv, yv)) = val {
                let pred = shln_forward(&hidden, &output, memory, xv)?;
                val_acc_curve.push(accuracy(&pred, yv));
            }
        }
    }

    let final_pred = shln_forward(&hidden, &output, memory, x)
        .map_err(|e| Error::Diverged { epoch: cfg.epochs, detail: e.to_string() })?;
    let final_loss = loss_forward(cfg.loss, &final_pred, y)?;
    if !final_loss.is_finite() {
        return Err(Error::Diverged {
            epoch: cfg.epochs,
            detail: format!("final training loss is {}", final_loss),
        });
    }

    Ok(TrainResult {
        hidden,
        output,
        final_loss,
        loss_curve,
        lr_curve,
        train_acc_curve,
        val_acc_curve,
        epochs_run: cfg.epochs,
        memory_update_count: 0,
    })
}

/// Curves and accounting from a finetuning run.
pub struct FinetuneReport {
    pub final_loss: f64,
    pub loss_curve: Vec<f64>,
    pub lr_curve: Vec<f64>,
    pub train_acc_curve: Vec<f64>,
    pub val_acc_curve: Vec<f64>,
    pub epochs_run: usize,
    pub memory_update_count: usize,
}

/// Per-batch forward over the whole stack with dropout on each GOP output.
/// Mirrors `NetworkModel::forward_core` plus masks; equality at rate 0 is
/// covered by a unit test.
struct StackTrainForward<S: Scalar> {
    outputs: DenseMatrix<S>,
    block_caches: Vec<crate::layers::GopCache<S>>,
    masks: Vec<Option<DenseMatrix<S>>>,
    output_cache: StackOutputCache<S>,
}

enum StackOutputCache<S: Scalar> {
    Linear(crate::layers::LinearCache<S>),
    Gop(crate::layers::GopCache<S>),
}

fn stack_forward_train<S: Scalar>(
    model: &NetworkModel<S>,
    xb: &DenseMatrix<S>,
    rate: f64,
    rng: &mut RngStream,
) -> Result<StackTrainForward<S>> {
    let last = model.blocks.len() - 1;
    let mut rep = xb.clone();
    let mut block_caches = Vec::with_capacity(model.blocks.len());
    let mut masks = Vec::with_capacity(model.blocks.len());
    let mut final_rep = None;

    for (k, block) in model.blocks.iter().enumerate() {
        let (yh, cache) = gop_forward(&block.gop, &rep)?;
        let mask = dropout_mask::<S>(yh.rows(), yh.cols(), rate, rng);
        let yh_dropped = apply_mask(&yh, mask.as_ref());
        let next = match model.kind {
            AlgorithmKind::Pop | AlgorithmKind::PopFast => yh_dropped,
            AlgorithmKind::PopMemH => {
                if k == last {
                    yh_dropped
                } else {
                    let m = block.memory.as_ref().ok_or_else(|| {
                        Error::Contract(format!("popmem-h block {} is missing its memory projection", k))
                    })?;
                    yh_dropped.hstack(&memory_apply(m, &rep)?)?
                }
            }
            AlgorithmKind::PopMemO => {
                let m = block.memory.as_ref().ok_or_else(|| {
                    Error::Contract(format!("popmem-o block {} is missing its memory projection", k))
                })?;
                yh_dropped.hstack(&memory_apply(m, &rep)?)?
            }
        };
        block_caches.push(cache);
        masks.push(mask);
        if k == last {
            final_rep = Some(next.clone());
        }
        rep = next;
    }
    let final_rep = final_rep.unwrap();

    let (outputs, output_cache) = match &model.output {
        OutputLayer::Linear(p) => {
            let (o, c) = linear_forward(p, &final_rep)?;
            (o, StackOutputCache::Linear(c))
        }
        OutputLayer::Gop(p) => {
            let (o, c) = gop_forward(p, &final_rep)?;
            (o, StackOutputCache::Gop(c))
        }
    };

    Ok(StackTrainForward {
        outputs,
        block_caches,
        masks,
        output_cache,
    })
}

/// Finetunes every synaptic weight of an assembled network with BP through
/// the full stack. Operator sets and memory projections stay untouched;
/// gradients do flow through the frozen memory paths to earlier blocks.
pub fn finetune_network<S: Scalar>(
    model: NetworkModel<S>,
    x: &DenseMatrix<S>,
    y: &DenseMatrix<S>,
    val: Option<(&DenseMatrix<S>, &DenseMatrix<S>)>,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<(NetworkModel<S>, FinetuneReport)> {
    cfg.validate()?;
    check_loss_output_pair(cfg.loss, &model.output)?;
    let mut model = model;
    let x_std = match &model.standardizer {
        Some(s) => s.transform(x)?,
        None => x.clone(),
    };
    let x_val_std = match (&model.standardizer, val) {
        (Some(s), Some((xv, _))) => Some(s.transform(xv)?),
        (None, Some((xv, _))) => Some(xv.clone()),
        _ => None,
    };

    // Snapshot of the frozen projections; asserted unchanged on exit.
    let memory_before: Vec<Option<MemoryProjection<S>>> =
        model.blocks.iter().map(|b| b.memory.clone()).collect();

    let n = x_std.rows();
    let mut order: Vec<usize> = (0..n).collect();
    let with_momentum = cfg.momentum > 0.0;
    let mut block_vels: Vec<Option<Velocity<S>>> = model
        .blocks
        .iter()
        .map(|b| with_momentum.then(|| Velocity::like(&b.gop.weights, &b.gop.bias)))
        .collect();
    let mut output_vel = with_momentum.then(|| match &model.output {
        OutputLayer::Linear(p) => Velocity::like(&p.weights, &p.bias),
        OutputLayer::Gop(p) => Velocity::like(&p.weights, &p.bias),
    });

    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut lr_curve = Vec::with_capacity(cfg.epochs);
    let mut train_acc_curve = Vec::new();
    let mut val_acc_curve = Vec::new();

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;

        for batch in order.chunks(cfg.batch_size) {
            let xb = x_std.select_rows(batch);
            let yb = y.select_rows(batch);

            let step = (|| -> Result<f64> {
                let fwd = stack_forward_train(&model, &xb, cfg.dropout_rate, rng)?;
                let batch_loss = loss_forward(cfg.loss, &fwd.outputs, &yb)?;

                // Output layer backward.
                let (mut rep_grad, out_w, out_b) = match (&model.output, &fwd.output_cache) {
                    (OutputLayer::Linear(p), StackOutputCache::Linear(cache)) => {
                        let dlogits = match cfg.loss {
                            LossKind::CrossEntropy => loss_backward(cfg.loss, &fwd.outputs, &yb)?,
                            LossKind::Mse => {
                                let dout = loss_backward(cfg.loss, &fwd.outputs, &yb)?;
                                output_grad_to_logits(p, cache, &dout)
                            }
                        };
                        let grads = linear_backward_from_logits(p, cache, &dlogits)?;
                        (grads.input, grads.weights, grads.bias)
                    }
                    (OutputLayer::Gop(p), StackOutputCache::Gop(cache)) => {
                        let dout = loss_backward(cfg.loss, &fwd.outputs, &yb)?;
                        let grads = gop_backward(p, cache, &dout)?;
                        (grads.input, grads.weights, grads.bias)
                    }
                    _ => unreachable!("output cache matches output layer"),
                };

                // Walk the blocks backward. `rep_grad` always holds the
                // gradient w.r.t. what block k passed downstream.
                let mut staged: Vec<(DenseMatrix<S>, Vec<S>)> = Vec::with_capacity(model.blocks.len());
                for (k, block) in model.blocks.iter().enumerate().rev() {
                    let h = block.gop.fan_out();
                    let has_mem_cols = match model.kind {
                        AlgorithmKind::Pop | AlgorithmKind::PopFast => false,
                        AlgorithmKind::PopMemH => k != model.blocks.len() - 1,
                        AlgorithmKind::PopMemO => true,
                    };

                    let mut y_grad = DenseMatrix::zeros(rep_grad.rows(), h);
                    for r in 0..rep_grad.rows() {
                        y_grad.row_mut(r).copy_from_slice(&rep_grad.row(r)[..h]);
                    }
                    let y_grad = apply_mask(&y_grad, fwd.masks[k].as_ref());
                    let gop_grads = gop_backward(&block.gop, &fwd.block_caches[k], &y_grad)?;

                    let mut input_grad = gop_grads.input;
                    if has_mem_cols {
                        let mem = block.memory.as_ref().unwrap();
                        let g_dim = mem.out_dim();
                        let mut m_grad = DenseMatrix::zeros(rep_grad.rows(), g_dim);
                        for r in 0..rep_grad.rows() {
                            m_grad.row_mut(r).copy_from_slice(&rep_grad.row(r)[h..h + g_dim]);
                        }
                        input_grad = input_grad.add(&memory_backward(mem, &m_grad)?)?;
                    }
                    staged.push((gop_grads.weights, gop_grads.bias));
                    rep_grad = input_grad;
                }
                staged.reverse();

                // Apply updates after the full backward pass.
                match &mut model.output {
                    OutputLayer::Linear(p) => sgd_step(
                        &mut p.weights,
                        &mut p.bias,
                        &out_w,
                        &out_b,
                        output_vel.as_mut(),
                        lr,
                        cfg,
                    ),
                    OutputLayer::Gop(p) => sgd_step(
                        &mut p.weights,
                        &mut p.bias,
                        &out_w,
                        &out_b,
                        output_vel.as_mut(),
                        lr,
                        cfg,
                    ),
                }
                for ((block, (wg, bg)), vel) in
                    model.blocks.iter_mut().zip(&staged).zip(block_vels.iter_mut())
                {
                    sgd_step(&mut block.gop.weights, &mut block.gop.bias, wg, bg, vel.as_mut(), lr, cfg);
                }
                Ok(batch_loss)
            })();

            match step {
                Ok(batch_loss) => epoch_loss += batch_loss * batch.len() as f64 / n as f64,
                Err(e) => {
                    return Err(Error::Diverged {
                        epoch,
                        detail: e.to_string(),
                    })
                }
            }
        }

        if !epoch_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("epoch training loss is {}", epoch_loss),
            });
        }
        loss_curve.push(epoch_loss);
        lr_curve.push(lr);
        if cfg.track_accuracy {
            let pred = model.forward_core(&x_std)?.0;
            train_acc_curve.push(accuracy(&pred, y));
            if let (Some(xv), Some((_, yv))) = (&x_val_std, val) {
                let pred = model.forward_core(xv)?.0;
                val_acc_curve.push(accuracy(&pred, yv));
            }
        }
    }

    let final_pred = model.forward_core(&x_std)?.0;
    let final_loss = loss_forward(cfg.loss, &final_pred, y)?;
    if !final_loss.is_finite() {
        return Err(Error::Diverged {
            epoch: cfg.epochs,
            detail: format!("final training loss is {}", final_loss),
        });
    }

    for (before, after) in memory_before.iter().zip(&model.blocks) {
        debug_assert!(before == &after.memory, "memory projection mutated during finetune");
    }

    Ok((
        model,
        FinetuneReport {
            final_loss,
            loss_curve,
            lr_curve,
            train_acc_curve,
            val_acc_curve,
            epochs_run: cfg.epochs,
            memory_update_count: 0,
        },
    ))
}
