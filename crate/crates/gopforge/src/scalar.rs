//! Scalar abstraction for the numeric core.
//!
//! All dense math (matrices, operators, layers, projections) is generic over
//! [`Scalar`], implemented for `f32` and `f64`. The experiment pipeline and
//! the file formats use the `f64` aliases exported from the crate root: the
//! exponential and Gaussian nodal operators need double precision to meet the
//! gradient-check tolerances.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point element type of the dense kernel: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal or config value, rounding for `f32`.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
