//! The GOP operator library: six nodal, four pooling and three activation
//! operators, each with forward evaluation and analytic partial derivatives,
//! plus the canonical enumeration of the 72-element operator-set product
//! space.
//!
//! Arguments to `exp` are clamped to `[-50, 50]` before exponentiation so
//! the exponential family stays finite under unlucky weight excursions; the
//! backward formulas use the matching clamped chain rule (zero slope past
//! the clamp), so analytic and numerical derivatives agree everywhere.

use std::fmt;

use crate::scalar::Scalar;

/// Clamp bound for exponent arguments.
pub const EXP_CLAMP: f64 = 50.0;

/// Per-connection transform `z = psi(y, w)` of an input signal by its
/// synaptic weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodalOp {
    Multiplication,
    Exponential,
    Harmonic,
    Quadratic,
    Gaussian,
    Dog,
}

/// Reduction of the transformed signals of one neuron to a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PoolOp {
    Summation,
    Correlation1,
    Correlation2,
    Maximum,
}

/// Elementwise output nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActOp {
    Sigmoid,
    Tanh,
    Relu,
}

pub const NODAL_OPS: [NodalOp; 6] = [
    NodalOp::Multiplication,
    NodalOp::Exponential,
    NodalOp::Harmonic,
    NodalOp::Quadratic,
    NodalOp::Gaussian,
    NodalOp::Dog,
];

pub const POOL_OPS: [PoolOp; 4] = [
    PoolOp::Summation,
    PoolOp::Correlation1,
    PoolOp::Correlation2,
    PoolOp::Maximum,
];

pub const ACT_OPS: [ActOp; 3] = [ActOp::Sigmoid, ActOp::Tanh, ActOp::Relu];

/// Size of the operator-set library (6 x 4 x 3).
pub const LIBRARY_SIZE: usize = NODAL_OPS.len() * POOL_OPS.len() * ACT_OPS.len();

#[inline]
fn clamp_exp_arg<S: Scalar>(u: S) -> (S, bool) {
    let bound = S::of(EXP_CLAMP);
    if u > bound {
        (bound, true)
    } else if u < -bound {
        (-bound, true)
    } else {
        (u, false)
    }
}

impl NodalOp {
    /// `z = psi(y, w)` per the library table.
    #[inline]
    pub fn forward<S: Scalar>(self, w: S, y: S) -> S {
        match self {
            NodalOp::Multiplication => w * y,
            NodalOp::Exponential => {
                let (u, _) = clamp_exp_arg(w * y);
                u.exp() - S::one()
            }
            NodalOp::Harmonic => (w * y).sin(),
            NodalOp::Quadratic => w * y * y,
            NodalOp::Gaussian => {
                let (u, _) = clamp_exp_arg(-w * y * y);
                w * u.exp()
            }
            NodalOp::Dog => {
                let (u, _) = clamp_exp_arg(-w * y * y);
                w * y * u.exp()
            }
        }
    }

    /// Analytic partials `(dz/dw, dz/dy)` at `(w, y)`.
    #[inline]
    pub fn backward<S: Scalar>(self, w: S, y: S) -> (S, S) {
        match self {
            NodalOp::Multiplication => (y, w),
            NodalOp::Exponential => {
                let (u, clamped) = clamp_exp_arg(w * y);
                if clamped {
                    (S::zero(), S::zero())
                } else {
                    let e = u.exp();
                    (y * e, w * e)
                }
            }
            NodalOp::Harmonic => {
                let c = (w * y).cos();
                (y * c, w * c)
            }
            NodalOp::Quadratic => (y * y, S::of(2.0) * w * y),
            NodalOp::Gaussian => {
                let (u, clamped) = clamp_exp_arg(-w * y * y);
                let e = u.exp();
                if clamped {
                    // Only the leading w factor still varies.
                    (e, S::zero())
                } else {
                    (e * (S::one() - w * y * y), -S::of(2.0) * w * w * y * e)
                }
            }
            NodalOp::Dog => {
                let (u, clamped) = clamp_exp_arg(-w * y * y);
                let e = u.exp();
                if clamped {
                    (y * e, w * e)
                } else {
                    (
                        y * e * (S::one() - w * y * y),
                        w * e * (S::one() - S::of(2.0) * w * y * y),
                    )
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NodalOp::Multiplication => "multiplication",
            NodalOp::Exponential => "exponential",
            NodalOp::Harmonic => "harmonic",
            NodalOp::Quadratic => "quadratic",
            NodalOp::Gaussian => "gaussian",
            NodalOp::Dog => "dog",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        NODAL_OPS.into_iter().find(|op| op.name() == name)
    }
}

impl PoolOp {
    /// Smallest input length the pool is defined on.
    pub fn arity_floor(self) -> usize {
        match self {
            PoolOp::Summation | PoolOp::Maximum => 1,
            PoolOp::Correlation1 => 2,
            PoolOp::Correlation2 => 3,
        }
    }

    /// Reduces the nodal outputs of one neuron. The caller guarantees
    /// `z.len() >= arity_floor()`; layer construction enforces it.
    #[inline]
    pub fn forward<S: Scalar>(self, z: &[S]) -> S {
        debug_assert!(z.len() >= self.arity_floor());
        match self {
            PoolOp::Summation => z.iter().fold(S::zero(), |a, &b| a + b),
            PoolOp::Correlation1 => {
                let mut acc = S::zero();
                for k in 0..z.len() - 1 {
                    acc += z[k] * z[k + 1];
                }
                acc
            }
            PoolOp::Correlation2 => {
                let mut acc = S::zero();
                for k in 0..z.len() - 2 {
                    acc += z[k] * z[k + 1] * z[k + 2];
                }
                acc
            }
            PoolOp::Maximum => {
                let mut best = z[0];
                for &v in &z[1..] {
                    if v > best {
                        best = v;
                    }
                }
                best
            }
        }
    }

    /// Gradient of the pooled value with respect to each `z[k]`, written
    /// into `grad` (same length as `z`). Maximum pooling puts a single one
    /// at the first maximal index.
    #[inline]
    pub fn backward_into<S: Scalar>(self, z: &[S], grad: &mut [S]) {
        debug_assert_eq!(z.len(), grad.len());
        let n = z.len();
        match self {
            PoolOp::Summation => grad.fill(S::one()),
            PoolOp::Correlation1 => {
                for k in 0..n {
                    let mut g = S::zero();
                    if k > 0 {
                        g += z[k - 1];
                    }
                    if k + 1 < n {
                        g += z[k + 1];
                    }
                    grad[k] = g;
                }
            }
            PoolOp::Correlation2 => {
                for k in 0..n {
                    let mut g = S::zero();
                    // Windows (k-2, k-1, k), (k-1, k, k+1), (k, k+1, k+2),
                    // truncated at the boundaries.
                    if k >= 2 {
                        g += z[k - 2] * z[k - 1];
                    }
                    if k >= 1 && k + 1 < n {
                        g += z[k - 1] * z[k + 1];
                    }
                    if k + 2 < n {
                        g += z[k + 1] * z[k + 2];
                    }
                    grad[k] = g;
                }
            }
            PoolOp::Maximum => {
                let mut arg = 0;
                for k in 1..n {
                    if z[k] > z[arg] {
                        arg = k;
                    }
                }
                grad.fill(S::zero());
                grad[arg] = S::one();
            }
        }
    }

    pub fn backward<S: Scalar>(self, z: &[S]) -> Vec<S> {
        let mut grad = vec![S::zero(); z.len()];
        self.backward_into(z, &mut grad);
        grad
    }

    pub fn name(self) -> &'static str {
        match self {
            PoolOp::Summation => "summation",
            PoolOp::Correlation1 => "1-correlation",
            PoolOp::Correlation2 => "2-correlation",
            PoolOp::Maximum => "maximum",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        POOL_OPS.into_iter().find(|op| op.name() == name)
    }
}

impl ActOp {
    #[inline]
    pub fn forward<S: Scalar>(self, x: S) -> S {
        match self {
            ActOp::Sigmoid => {
                let (u, _) = clamp_exp_arg(x);
                S::one() / (S::one() + (-u).exp())
            }
            ActOp::Tanh => {
                let (u, _) = clamp_exp_arg(x);
                u.tanh()
            }
            ActOp::Relu => {
                if x > S::zero() {
                    x
                } else {
                    S::zero()
                }
            }
        }
    }

    /// `df/dx` at `x`. The ReLU derivative at exactly zero is zero.
    #[inline]
    pub fn backward<S: Scalar>(self, x: S) -> S {
        match self {
            ActOp::Sigmoid => {
                let s = self.forward(x);
                s * (S::one() - s)
            }
            ActOp::Tanh => {
                let t = self.forward(x);
                S::one() - t * t
            }
            ActOp::Relu => {
                if x > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActOp::Sigmoid => "sigmoid",
            ActOp::Tanh => "tanh",
            ActOp::Relu => "relu",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        ACT_OPS.into_iter().find(|op| op.name() == name)
    }
}

/// One (nodal, pooling, activation) triple: a complete neuronal behavior.
/// `index` is the position in the canonical enumeration — the lexicographic
/// product with nodal outermost, then pool, then activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OperatorSet {
    pub nodal: NodalOp,
    pub pool: PoolOp,
    pub act: ActOp,
    pub index: usize,
}

impl OperatorSet {
    pub fn from_index(index: usize) -> Option<Self> {
        if index >= LIBRARY_SIZE {
            return None;
        }
        let act = ACT_OPS[index % ACT_OPS.len()];
        let rest = index / ACT_OPS.len();
        let pool = POOL_OPS[rest % POOL_OPS.len()];
        let nodal = NODAL_OPS[rest / POOL_OPS.len()];
        Some(Self { nodal, pool, act, index })
    }

    pub fn from_parts(nodal: NodalOp, pool: PoolOp, act: ActOp) -> Self {
        let ni = NODAL_OPS.iter().position(|&o| o == nodal).unwrap();
        let pi = POOL_OPS.iter().position(|&o| o == pool).unwrap();
        let ai = ACT_OPS.iter().position(|&o| o == act).unwrap();
        Self {
            nodal,
            pool,
            act,
            index: (ni * POOL_OPS.len() + pi) * ACT_OPS.len() + ai,
        }
    }

    pub fn from_names(nodal: &str, pool: &str, act: &str) -> Option<Self> {
        Some(Self::from_parts(
            NodalOp::from_name(nodal)?,
            PoolOp::from_name(pool)?,
            ActOp::from_name(act)?,
        ))
    }
}

impl fmt::Display for OperatorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.nodal.name(), self.pool.name(), self.act.name())
    }
}

/// The full library in canonical order: exactly 72 sets, stable across runs.
pub fn enumerate_library() -> Vec<OperatorSet> {
    (0..LIBRARY_SIZE)
        .map(|i| OperatorSet::from_index(i).unwrap())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::rng::RngStream;

    /// Central finite difference of a scalar function.
    fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    fn assert_close(analytic: f64, numeric: f64, rel_tol: f64, abs_floor: f64) {
        let scale = analytic.abs().max(numeric.abs());
        let err = (analytic - numeric).abs();
        assert!(
            err <= abs_floor || err <= rel_tol * scale,
            "analytic {} vs numeric {} (err {})",
            analytic,
            numeric,
            err
        );
    }

    #[test]
    fn nodal_forward_examples() {
        assert_eq!(NodalOp::Multiplication.forward(2.0, 3.0), 6.0);
        assert_eq!(NodalOp::Gaussian.forward(1.0, 0.0), 1.0);
        assert_eq!(NodalOp::Dog.forward(1.7, 0.0), 0.0);
        assert_eq!(NodalOp::Exponential.forward(0.0, 5.0), 0.0);
        assert_eq!(NodalOp::Quadratic.forward(3.0, 2.0), 12.0);
        assert!((NodalOp::Harmonic.forward(std::f64::consts::FRAC_PI_2, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn nodal_backward_examples() {
        assert_eq!(NodalOp::Multiplication.backward(2.0, 3.0), (3.0, 2.0));
        assert_eq!(NodalOp::Quadratic.backward(1.0, 2.0), (4.0, 4.0));
        // Gaussian at w = 1, y = 1: dz/dw = 0, dz/dy = -2 e^{-1}.
        let (dw, dy): (f64, f64) = NodalOp::Gaussian.backward(1.0, 1.0);
        assert!(dw.abs() < 1e-15);
        assert_close(dy, -2.0 * (-1.0f64).exp(), 1e-12, 1e-15);
        // And both partials agree with central differences at h = 1e-6.
        let ndw = central_diff(|w| NodalOp::Gaussian.forward(w, 1.0), 1.0, 1e-6);
        let ndy = central_diff(|y| NodalOp::Gaussian.forward(1.0, y), 1.0, 1e-6);
        assert_close(dw, ndw, 1e-6, 1e-9);
        assert_close(dy, ndy, 1e-6, 1e-9);
    }

    #[test]
    fn exponential_clamp_keeps_values_finite() {
        let z: f64 = NodalOp::Exponential.forward(30.0, 30.0);
        assert!(z.is_finite());
        assert_eq!(z, 50.0f64.exp() - 1.0);
        let (dw, dy) = NodalOp::Exponential.backward(30.0, 30.0);
        assert_eq!((dw, dy), (0.0, 0.0));
        let g: f64 = NodalOp::Gaussian.forward(-30.0, 30.0);
        assert!(g.is_finite());
    }

    #[test]
    fn pool_forward_examples() {
        assert_eq!(PoolOp::Summation.forward(&[1.0, 2.0, 3.0]), 6.0);
        assert_eq!(PoolOp::Correlation1.forward(&[1.0, 2.0, 3.0]), 8.0);
        assert_eq!(PoolOp::Correlation2.forward(&[1.0, 2.0, 3.0, 4.0]), 30.0);
        assert_eq!(PoolOp::Maximum.forward(&[1.0, 3.0, 2.0]), 3.0);
    }

    #[test]
    fn pool_backward_examples() {
        assert_eq!(PoolOp::Summation.backward(&[5.0, 7.0]), vec![1.0, 1.0]);
        assert_eq!(PoolOp::Correlation1.backward(&[1.0, 2.0, 3.0]), vec![2.0, 4.0, 2.0]);
        // First maximal index wins ties.
        assert_eq!(PoolOp::Maximum.backward(&[2.0, 5.0, 5.0]), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn correlation2_backward_matches_windows() {
        let z = [1.0, 2.0, 3.0, 4.0];
        let g = PoolOp::Correlation2.backward(&z);
        // d/dz of z0 z1 z2 + z1 z2 z3.
        assert_eq!(g, vec![2.0 * 3.0, 1.0 * 3.0 + 3.0 * 4.0, 1.0 * 2.0 + 2.0 * 4.0, 2.0 * 3.0]);
    }

    #[test]
    fn activation_examples() {
        assert_eq!(ActOp::Sigmoid.forward(0.0), 0.5);
        assert_eq!(ActOp::Sigmoid.backward(0.0), 0.25);
        assert_eq!(ActOp::Relu.forward(-3.0), 0.0);
        assert_eq!(ActOp::Relu.backward(-3.0), 0.0);
        assert_eq!(ActOp::Relu.backward(0.0), 0.0);
        assert_eq!(ActOp::Tanh.forward(0.0), 0.0);
        assert_eq!(ActOp::Tanh.backward(0.0), 1.0);
    }

    #[test]
    fn library_enumeration() {
        let lib = enumerate_library();
        assert_eq!(lib.len(), 72);
        assert_eq!(
            (lib[0].nodal, lib[0].pool, lib[0].act),
            (NodalOp::Multiplication, PoolOp::Summation, ActOp::Sigmoid)
        );
        assert_eq!(
            (lib[71].nodal, lib[71].pool, lib[71].act),
            (NodalOp::Dog, PoolOp::Maximum, ActOp::Relu)
        );
        for (i, set) in lib.iter().enumerate() {
            assert_eq!(set.index, i);
            assert_eq!(OperatorSet::from_parts(set.nodal, set.pool, set.act), *set);
            assert_eq!(
                OperatorSet::from_names(set.nodal.name(), set.pool.name(), set.act.name()),
                Some(*set)
            );
        }
        assert!(OperatorSet::from_index(72).is_none());
    }

    /// Analytic vs central-difference derivatives for every operator over
    /// random inputs in [-3, 3]: relative error < 1e-4 with an absolute
    /// floor of 1e-6 near zeros.
    #[test]
    fn derivative_check_all_operators() {
        const H: f64 = 1e-5;
        const REL: f64 = 1e-4;
        const ABS: f64 = 1e-6;
        let mut rng = RngStream::new(1234, 0);

        for op in NODAL_OPS {
            for _ in 0..1000 {
                let w = rng.uniform(-3.0, 3.0).unwrap();
                let y = rng.uniform(-3.0, 3.0).unwrap();
                let (dw, dy) = op.backward(w, y);
                assert_close(dw, central_diff(|w| op.forward(w, y), w, H), REL, ABS);
                assert_close(dy, central_diff(|y| op.forward(w, y), y, H), REL, ABS);
            }
        }

        for op in POOL_OPS {
            for _ in 0..1000 {
                let n = 3 + rng.index(6);
                let z = rng.uniform_vec(-3.0, 3.0, n).unwrap();
                if op == PoolOp::Maximum {
                    // Only meaningful where the argmax is strict and a step
                    // of H cannot change it.
                    let mut sorted = z.clone();
                    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
                    if sorted[0] - sorted[1] < 1e-3 {
                        continue;
                    }
                }
                let grad = op.backward(&z);
                for k in 0..n {
                    let fd = central_diff(
                        |v| {
                            let mut zz = z.clone();
                            zz[k] = v;
                            op.forward(&zz)
                        },
                        z[k],
                        H,
                    );
                    assert_close(grad[k], fd, REL, ABS);
                }
            }
        }

        for op in ACT_OPS {
            for _ in 0..1000 {
                let x = rng.uniform(-3.0, 3.0).unwrap();
                if op == ActOp::Relu && x.abs() < 1e-3 {
                    continue;
                }
                assert_close(op.backward(x), central_diff(|x| op.forward(x), x, H), REL, ABS);
            }
        }
    }

    /// Maximum pooling: the one-hot gradient dotted with a perturbation
    /// equals the directional finite difference when the argmax is strict.
    #[test]
    fn maximum_gradient_is_directional_derivative() {
        let mut rng = RngStream::new(77, 0);
        for _ in 0..200 {
            let n = 4 + rng.index(5);
            let z = rng.uniform_vec(-3.0, 3.0, n).unwrap();
            let mut sorted = z.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            if sorted[0] - sorted[1] < 1e-2 {
                continue;
            }
            let dir = rng.uniform_vec(-1.0, 1.0, n).unwrap();
            let grad = PoolOp::Maximum.backward(&z);
            assert_eq!(grad.iter().filter(|&&g| g != 0.0).count(), 1);
            let dot: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
            let h = 1e-5;
            let shifted =
                |sign: f64| -> f64 {
                    let zz: Vec<f64> =
                        z.iter().zip(&dir).map(|(&z, &d)| z + sign * h * d).collect();
                    PoolOp::Maximum.forward(&zz)
                };
            let fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * h);
            assert_close(dot, fd, 1e-6, 1e-9);
        }
    }

    /// Multiplication nodal + summation pooling over a row is an inner
    /// product.
    #[test]
    fn multiplication_summation_is_inner_product() {
        let mut rng = RngStream::new(5, 0);
        for _ in 0..100 {
            let n = 2 + rng.index(10);
            let w = rng.uniform_vec(-2.0, 2.0, n).unwrap();
            let y = rng.uniform_vec(-2.0, 2.0, n).unwrap();
            let z: Vec<f64> = w
                .iter()
                .zip(&y)
                .map(|(&w, &y)| NodalOp::Multiplication.forward(w, y))
                .collect();
            let pooled = PoolOp::Summation.forward(&z);
            let dot: f64 = w.iter().zip(&y).map(|(w, y)| w * y).sum();
            assert!((pooled - dot).abs() < 1e-12);
        }
    }
}
