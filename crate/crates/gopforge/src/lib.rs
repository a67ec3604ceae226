//! GOP networks with progressive layer-wise training.
//!
//! A generalized operational perceptron (GOP) replaces the fixed
//! multiply/sum/squash neuron with three pluggable operators — a nodal
//! transform per connection, a pooling reduction and an activation — drawn
//! from a 72-element library. This crate implements the operator library
//! with analytic gradients, GOP layers and their training loop, and four
//! progressive construction algorithms that grow a network one hidden
//! layer at a time:
//!
//! * **POP** — two-pass greedy iterative search over hidden and GOP output
//!   operator sets (288 candidate trainings per layer),
//! * **POPfast** — a linear softmax/identity output layer, shrinking the
//!   search to the 72 hidden candidates,
//! * **POPmem-H** — POPfast plus a frozen PCA/LDA "memory" projection
//!   concatenated into the next step's input,
//! * **POPmem-O** — the memory path additionally feeds the output layer.
//!
//! The numeric core is generic over the scalar type via [`Scalar`]
//! (`f32`/`f64`); the experiment pipeline and file formats run on the
//! `f64` aliases below, which the exponential/Gaussian operators need to
//! meet the gradient-check tolerances.
//!
//! Candidate sweeps run on a deterministic parallel executor: results are
//! a pure function of the experiment seed, independent of worker count and
//! scheduling order.

pub mod data;
pub mod error;
pub mod layers;
pub mod memory;
pub mod model;
pub mod num;
pub mod ops;
pub mod progress;
pub mod scalar;
pub mod search;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// The default `f64` matrix: the numeric currency of the pipeline.
pub type Matrix = num::matrix::DenseMatrix<f64>;
/// Single-precision matrix for scalar-generic callers.
pub type Matrix32 = num::matrix::DenseMatrix<f32>;

pub use data::{
    load_csv, load_matrix_gopm, make_synthetic, save_matrix_gopm, split_dataset, CsvSchema,
    Dataset, Split, Standardizer, SyntheticSpec,
};
pub use layers::{GopLayerParams, LinearLayerParams, MemoryProjection, OutputActivation};
pub use model::{AlgorithmKind, HiddenBlock, NetworkModel, OutputLayer};
pub use num::matrix::DenseMatrix;
pub use num::rng::{RngStream, StreamId, StreamPurpose};
pub use ops::{enumerate_library, ActOp, NodalOp, OperatorSet, PoolOp, LIBRARY_SIZE};
pub use progress::{
    run_pop, run_popfast, run_popmem_h, run_popmem_o, run_progression, should_stop, MemoryFit,
    MetricSplit, NetworkTemplate, ProgressionConfig, RunReport, StepRecord, StopMode, StoppingRule,
};
pub use search::{run_sweep, CandidateJob, SweepResult};
pub use train::{
    accuracy, finetune_network, loss_backward, loss_forward, train_shln, LossKind, Regularizer,
    TrainConfig, TrainResult,
};
