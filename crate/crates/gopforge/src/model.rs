//! Assembled progressive networks: hidden blocks, memory wiring and the
//! inference entry point.
//!
//! The four construction algorithms share one model shape and differ in how
//! block outputs feed forward. With `y_k` the GOP output of block `k` over
//! its input `r_k`, and `g_k` the block's frozen memory projection of `r_k`:
//!
//! * `Pop` / `PopFast`: `r_{k+1} = y_k`; the output layer reads the last
//!   `y`. No memory projections.
//! * `PopMemH`: `r_{k+1} = [y_k, g_k(r_k)]`; the output layer reads the
//!   last `y` only. The last block carries no projection.
//! * `PopMemO`: `r_{k+1} = [y_k, g_k(r_k)]` and the output layer reads the
//!   full concatenation, so the linear memory path reaches the output.

use crate::data::Standardizer;
use crate::error::{Error, Result};
use crate::layers::{
    gop_forward, linear_forward, memory_apply, GopCache, GopLayerParams, LinearCache,
    LinearLayerParams, MemoryProjection,
};
use crate::num::matrix::DenseMatrix;
use crate::scalar::Scalar;

/// Which progressive construction algorithm produced (or will produce) a
/// network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmKind {
    Pop,
    PopFast,
    PopMemH,
    PopMemO,
}

impl AlgorithmKind {
    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::Pop => "pop",
            AlgorithmKind::PopFast => "popfast",
            AlgorithmKind::PopMemH => "popmem-h",
            AlgorithmKind::PopMemO => "popmem-o",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "pop" => Some(AlgorithmKind::Pop),
            "popfast" => Some(AlgorithmKind::PopFast),
            "popmem-h" => Some(AlgorithmKind::PopMemH),
            "popmem-o" => Some(AlgorithmKind::PopMemO),
            _ => None,
        }
    }

    pub fn uses_memory(self) -> bool {
        matches!(self, AlgorithmKind::PopMemH | AlgorithmKind::PopMemO)
    }
}

/// One learned hidden block: GOP parameters plus, for the memory variants,
/// the frozen projection fitted on this block's input representation.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenBlock<S: Scalar> {
    pub gop: GopLayerParams<S>,
    pub memory: Option<MemoryProjection<S>>,
}

/// Output layer: the POPfast linear relaxation or POP's GOP output layer.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputLayer<S: Scalar> {
    Linear(LinearLayerParams<S>),
    Gop(GopLayerParams<S>),
}

impl<S: Scalar> OutputLayer<S> {
    pub fn fan_in(&self) -> usize {
        match self {
            OutputLayer::Linear(p) => p.fan_in(),
            OutputLayer::Gop(p) => p.fan_in(),
        }
    }

    pub fn fan_out(&self) -> usize {
        match self {
            OutputLayer::Linear(p) => p.fan_out(),
            OutputLayer::Gop(p) => p.fan_out(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            OutputLayer::Linear(p) => p.param_count(),
            OutputLayer::Gop(p) => p.param_count(),
        }
    }
}

/// Caches collected by a full forward pass, consumed by whole-network
/// finetuning.
pub struct ForwardTrace<S: Scalar> {
    /// Input representation of each block (`r_k`), standardized space.
    pub block_inputs: Vec<DenseMatrix<S>>,
    pub gop_caches: Vec<GopCache<S>>,
    /// Raw GOP outputs `y_k` (before any dropout applied by a trainer).
    pub gop_outputs: Vec<DenseMatrix<S>>,
    /// Memory outputs `g_k(r_k)` where a projection exists.
    pub memory_outputs: Vec<Option<DenseMatrix<S>>>,
    /// What the output layer consumed.
    pub final_rep: DenseMatrix<S>,
    pub output_cache: OutputCache<S>,
}

pub enum OutputCache<S: Scalar> {
    Linear(LinearCache<S>),
    Gop(GopCache<S>),
}

/// A complete, immutable progressive network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel<S: Scalar> {
    pub kind: AlgorithmKind,
    pub blocks: Vec<HiddenBlock<S>>,
    pub output: OutputLayer<S>,
    pub standardizer: Option<Standardizer<S>>,
}

impl<S: Scalar> NetworkModel<S> {
    /// Raw-input inference: standardize (if fitted) and run the stack.
    pub fn forward(&self, x: &DenseMatrix<S>) -> Result<DenseMatrix<S>> {
        let x_std = match &self.standardizer {
            Some(s) => s.transform(x)?,
            None => x.clone(),
        };
        Ok(self.forward_core(&x_std)?.0)
    }

    /// Predicted class indices (argmax over outputs).
    pub fn predict(&self, x: &DenseMatrix<S>) -> Result<Vec<usize>> {
        let out = self.forward(x)?;
        Ok((0..out.rows())
            .map(|r| {
                let row = out.row(r);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect())
    }

    /// Forward pass over already-standardized input, returning outputs and
    /// the trace finetuning needs. Dropout is the trainer's concern: this
    /// pass is deterministic.
    pub fn forward_core(&self, x_std: &DenseMatrix<S>) -> Result<(DenseMatrix<S>, ForwardTrace<S>)> {
        if self.blocks.is_empty() {
            return Err(Error::Contract("model has no hidden blocks".into()));
        }
        let mut block_inputs = Vec::with_capacity(self.blocks.len());
        let mut gop_caches = Vec::with_capacity(self.blocks.len());
        let mut gop_outputs = Vec::with_capacity(self.blocks.len());
        let mut memory_outputs = Vec::with_capacity(self.blocks.len());

        let mut rep = x_std.clone();
        let mut final_rep = None;
        let last = self.blocks.len() - 1;
        for (k, block) in self.blocks.iter().enumerate() {
            let (y, cache) = gop_forward(&block.gop, &rep)?;
            let mem = match (self.kind, &block.memory) {
                (AlgorithmKind::Pop | AlgorithmKind::PopFast, _) => None,
                (AlgorithmKind::PopMemH, Some(m)) => Some(memory_apply(m, &rep)?),
                (AlgorithmKind::PopMemH, None) => None,
                (AlgorithmKind::PopMemO, Some(m)) => Some(memory_apply(m, &rep)?),
                (AlgorithmKind::PopMemO, None) => {
                    return Err(Error::Contract(format!(
                        "popmem-o block {} is missing its memory projection",
                        k
                    )))
                }
            };

            let next = match self.kind {
                AlgorithmKind::Pop | AlgorithmKind::PopFast => y.clone(),
                AlgorithmKind::PopMemH => {
                    if k == last {
                        y.clone()
                    } else {
                        let m = mem.as_ref().ok_or_else(|| {
                            Error::Contract(format!("popmem-h block {} is missing its memory projection", k))
                        })?;
                        y.hstack(m)?
                    }
                }
                AlgorithmKind::PopMemO => y.hstack(mem.as_ref().unwrap())?,
            };

            block_inputs.push(rep);
            gop_caches.push(cache);
            gop_outputs.push(y);
            memory_outputs.push(mem);
            if k == last {
                final_rep = Some(next.clone());
            }
            rep = next;
        }
        let final_rep = final_rep.unwrap();

        let (out, output_cache) = match &self.output {
            OutputLayer::Linear(p) => {
                let (o, c) = linear_forward(p, &final_rep)?;
                (o, OutputCache::Linear(c))
            }
            OutputLayer::Gop(p) => {
                let (o, c) = gop_forward(p, &final_rep)?;
                (o, OutputCache::Gop(c))
            }
        };

        Ok((
            out,
            ForwardTrace {
                block_inputs,
                gop_caches,
                gop_outputs,
                memory_outputs,
                final_rep,
                output_cache,
            },
        ))
    }

    /// Number of parameters touched by gradient descent; memory bases are
    /// excluded.
    pub fn trainable_param_count(&self) -> usize {
        self.blocks.iter().map(|b| b.gop.param_count()).sum::<usize>() + self.output.param_count()
    }

    pub fn input_dim(&self) -> usize {
        self.blocks[0].gop.fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.output.fan_out()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::rng::RngStream;
    use crate::ops::OperatorSet;

    type M = DenseMatrix<f64>;

    fn block(fan_in: usize, fan_out: usize, rng: &mut RngStream) -> HiddenBlock<f64> {
        let opset = OperatorSet::from_index(0).unwrap();
        HiddenBlock {
            gop: GopLayerParams::init(fan_in, fan_out, opset, rng).unwrap(),
            memory: None,
        }
    }

    #[test]
    fn popfast_stack_matches_manual_chain() {
        let mut rng = RngStream::new(21, 0);
        let b1 = block(3, 4, &mut rng);
        let b2 = block(4, 3, &mut rng);
        let out = LinearLayerParams::init(3, 2, crate::layers::OutputActivation::Softmax, &mut rng).unwrap();
        let model = NetworkModel {
            kind: AlgorithmKind::PopFast,
            blocks: vec![b1.clone(), b2.clone()],
            output: OutputLayer::Linear(out.clone()),
            standardizer: None,
        };
        let x = M::from_vec(5, 3, rng.uniform_vec(-1.0, 1.0, 15).unwrap()).unwrap();
        let got = model.forward(&x).unwrap();

        let (y1, _) = gop_forward(&b1.gop, &x).unwrap();
        let (y2, _) = gop_forward(&b2.gop, &y1).unwrap();
        let (expect, _) = linear_forward(&out, &y2).unwrap();
        assert_eq!(got, expect);
    }

    #[test]
    fn param_count_excludes_memory() {
        let mut rng = RngStream::new(22, 0);
        let mut b = block(3, 4, &mut rng);
        b.memory = Some(MemoryProjection::null(3));
        let out = LinearLayerParams::init(4, 2, crate::layers::OutputActivation::Softmax, &mut rng).unwrap();
        let model = NetworkModel {
            kind: AlgorithmKind::PopMemO,
            blocks: vec![b],
            output: OutputLayer::Linear(out),
            standardizer: None,
        };
        assert_eq!(model.trainable_param_count(), 3 * 4 + 4 + 4 * 2 + 2);
    }
}
