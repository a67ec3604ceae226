//! Numeric substrate: dense matrices, symmetric eigendecomposition, and
//! reproducible random streams.

pub mod eig;
pub mod matrix;
pub mod rng;

pub use eig::{sym_eig, SymEig};
pub use matrix::DenseMatrix;
pub use rng::{RngStream, StreamId, StreamPurpose};
