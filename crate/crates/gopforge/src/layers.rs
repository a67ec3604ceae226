//! Layer-level forward and backward passes.
//!
//! A GOP layer applies, for every sample and neuron `i`:
//! `z_k = psi(y_k, w_ki)` for each input `k`, then `x_i = rho(z) + b_i`,
//! then `out_i = f(x_i)`. The linear output layer is the POPfast relaxation
//! (affine map plus softmax or identity), and the memory projection is a
//! frozen centered linear map fitted by the memory module.

use crate::error::{Error, Result};
use crate::num::matrix::DenseMatrix;
use crate::num::rng::RngStream;
use crate::ops::OperatorSet;
use crate::scalar::Scalar;

/// Synaptic weights are initialized uniformly in `[-INIT_BOUND, INIT_BOUND)`
/// and biases at zero; small magnitudes keep the exponential and Gaussian
/// nodal operators in their stable range at epoch zero. Recorded in the
/// model manifest for reproducibility.
pub const INIT_BOUND: f64 = 0.1;

/// Parameters of one GOP layer. All neurons share `opset`.
#[derive(Debug, Clone, PartialEq)]
pub struct GopLayerParams<S: Scalar> {
    /// `fan_in x fan_out`.
    pub weights: DenseMatrix<S>,
    /// One bias per neuron, added after pooling and before activation.
    pub bias: Vec<S>,
    pub opset: OperatorSet,
}

impl<S: Scalar> GopLayerParams<S> {
    /// Seeded initialization. Fails at construction time when the pool
    /// operator needs more inputs than `fan_in` provides.
    pub fn init(fan_in: usize, fan_out: usize, opset: OperatorSet, rng: &mut RngStream) -> Result<Self> {
        let floor = opset.pool.arity_floor();
        if fan_in < floor {
            return Err(Error::invalid(format!(
                "pool operator {} needs at least {} inputs, layer has fan_in {}",
                opset.pool.name(),
                floor,
                fan_in
            )));
        }
        let draws = rng.uniform_vec(-INIT_BOUND, INIT_BOUND, fan_in * fan_out)?;
        let weights =
            DenseMatrix::from_vec_unchecked(fan_in, fan_out, draws.into_iter().map(S::of).collect());
        Ok(Self {
            weights,
            bias: vec![S::zero(); fan_out],
            opset,
        })
    }

    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    pub fn param_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }
}

/// Forward byproducts needed for an exact backward pass: the raw nodal
/// outputs and the pre-activations.
pub struct GopCache<S: Scalar> {
    input: DenseMatrix<S>,
    /// `z[(b * fan_out + i) * fan_in + k]`: nodal output of input `k` at
    /// neuron `i` for sample `b`.
    z: Vec<S>,
    /// Pre-activation `x`, `batch x fan_out`.
    x: DenseMatrix<S>,
}

impl<S: Scalar> GopCache<S> {
    pub fn pre_activation(&self) -> &DenseMatrix<S> {
        &self.x
    }
}

/// Gradients of one GOP layer backward pass. Weight and bias gradients are
/// summed over the batch; the loss layer supplies any averaging factors.
pub struct GopGrads<S: Scalar> {
    pub input: DenseMatrix<S>,
    pub weights: DenseMatrix<S>,
    pub bias: Vec<S>,
}

pub fn gop_forward<S: Scalar>(
    params: &GopLayerParams<S>,
    input: &DenseMatrix<S>,
) -> Result<(DenseMatrix<S>, GopCache<S>)> {
    let (fan_in, fan_out) = (params.fan_in(), params.fan_out());
    if input.cols() != fan_in {
        return Err(Error::shape(
            "gop_forward",
            format!("input has {} columns, layer expects {}", input.cols(), fan_in),
        ));
    }
    let batch = input.rows();
    let mut z = vec![S::zero(); batch * fan_out * fan_in];
    let mut x = DenseMatrix::zeros(batch, fan_out);
    let mut out = DenseMatrix::zeros(batch, fan_out);
    let (nodal, pool, act) = (params.opset.nodal, params.opset.pool, params.opset.act);

    for b in 0..batch {
        let row = input.row(b);
        for i in 0..fan_out {
            let zrow = &mut z[(b * fan_out + i) * fan_in..(b * fan_out + i + 1) * fan_in];
            for (k, (zk, &y)) in zrow.iter_mut().zip(row).enumerate() {
                *zk = nodal.forward(params.weights[(k, i)], y);
            }
            let xi = pool.forward(zrow) + params.bias[i];
            x[(b, i)] = xi;
            out[(b, i)] = act.forward(xi);
        }
    }

    Ok((
        out,
        GopCache {
            input: input.clone(),
            z,
            x,
        },
    ))
}

pub fn gop_backward<S: Scalar>(
    params: &GopLayerParams<S>,
    cache: &GopCache<S>,
    upstream: &DenseMatrix<S>,
) -> Result<GopGrads<S>> {
    let (fan_in, fan_out) = (params.fan_in(), params.fan_out());
    let batch = cache.input.rows();
    if cache.input.cols() != fan_in
        || cache.x.rows() != batch
        || cache.x.cols() != fan_out
        || cache.z.len() != batch * fan_out * fan_in
    {
        return Err(Error::Contract(format!(
            "gop_backward cache does not match layer {}x{}",
            fan_in, fan_out
        )));
    }
    if upstream.rows() != batch || upstream.cols() != fan_out {
        return Err(Error::Contract(format!(
            "upstream gradient is {}x{}, expected {}x{}",
            upstream.rows(),
            upstream.cols(),
            batch,
            fan_out
        )));
    }

    let act = params.opset.act;
    let (nodal, pool) = (params.opset.nodal, params.opset.pool);
    let mut input_grad = DenseMatrix::zeros(batch, fan_in);
    let mut weight_grad = DenseMatrix::zeros(fan_in, fan_out);
    let mut bias_grad = vec![S::zero(); fan_out];
    let mut pool_grad = vec![S::zero(); fan_in];

    for b in 0..batch {
        let row = cache.input.row(b);
        for i in 0..fan_out {
            let dx = upstream[(b, i)] * act.backward(cache.x[(b, i)]);
            if dx == S::zero() {
                continue;
            }
            bias_grad[i] += dx;
            let zrow = &cache.z[(b * fan_out + i) * fan_in..(b * fan_out + i + 1) * fan_in];
            pool.backward_into(zrow, &mut pool_grad);
            for k in 0..fan_in {
                let chain = dx * pool_grad[k];
                if chain == S::zero() {
                    continue;
                }
                let (dz_dw, dz_dy) = nodal.backward(params.weights[(k, i)], row[k]);
                weight_grad[(k, i)] += chain * dz_dw;
                input_grad[(b, k)] += chain * dz_dy;
            }
        }
    }

    Ok(GopGrads {
        input: input_grad,
        weights: weight_grad,
        bias: bias_grad,
    })
}

/// Output activation of the linear layer: softmax for classification,
/// identity for regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Softmax,
    Identity,
}

impl OutputActivation {
    pub fn name(self) -> &'static str {
        match self {
            OutputActivation::Softmax => "softmax",
            OutputActivation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "softmax" => Some(OutputActivation::Softmax),
            "identity" => Some(OutputActivation::Identity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayerParams<S: Scalar> {
    /// `fan_in x fan_out`.
    pub weights: DenseMatrix<S>,
    pub bias: Vec<S>,
    pub activation: OutputActivation,
}

impl<S: Scalar> LinearLayerParams<S> {
    pub fn init(
        fan_in: usize,
        fan_out: usize,
        activation: OutputActivation,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let draws = rng.uniform_vec(-INIT_BOUND, INIT_BOUND, fan_in * fan_out)?;
        let weights =
            DenseMatrix::from_vec_unchecked(fan_in, fan_out, draws.into_iter().map(S::of).collect());
        Ok(Self {
            weights,
            bias: vec![S::zero(); fan_out],
            activation,
        })
    }

    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    pub fn param_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }
}

pub struct LinearCache<S: Scalar> {
    input: DenseMatrix<S>,
    /// Post-activation output (softmax probabilities or raw affine values).
    output: DenseMatrix<S>,
}

impl<S: Scalar> LinearCache<S> {
    pub fn output(&self) -> &DenseMatrix<S> {
        &self.output
    }
}

pub fn linear_forward<S: Scalar>(
    params: &LinearLayerParams<S>,
    input: &DenseMatrix<S>,
) -> Result<(DenseMatrix<S>, LinearCache<S>)> {
    if input.cols() != params.fan_in() {
        return Err(Error::shape(
            "linear_forward",
            format!("input has {} columns, layer expects {}", input.cols(), params.fan_in()),
        ));
    }
    let mut out = input.matmul(&params.weights)?;
    for r in 0..out.rows() {
        for (v, b) in out.row_mut(r).iter_mut().zip(&params.bias) {
            *v += *b;
        }
    }
    if params.activation == OutputActivation::Softmax {
        softmax_rows(&mut out);
    }
    Ok((
        out.clone(),
        LinearCache {
            input: input.clone(),
            output: out,
        },
    ))
}

/// Numerically stable row softmax.
fn softmax_rows<S: Scalar>(m: &mut DenseMatrix<S>) {
    for r in 0..m.rows() {
        let row = m.row_mut(r);
        let mut max = row[0];
        for &v in row.iter() {
            if v > max {
                max = v;
            }
        }
        let mut sum = S::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Converts a gradient w.r.t. the post-activation output into a gradient
/// w.r.t. the affine logits (softmax Jacobian, or pass-through for
/// identity).
pub fn output_grad_to_logits<S: Scalar>(
    params: &LinearLayerParams<S>,
    cache: &LinearCache<S>,
    output_grad: &DenseMatrix<S>,
) -> DenseMatrix<S> {
    match params.activation {
        OutputActivation::Identity => output_grad.clone(),
        OutputActivation::Softmax => {
            let mut dlogits = DenseMatrix::zeros(output_grad.rows(), output_grad.cols());
            for r in 0..output_grad.rows() {
                let p = cache.output.row(r);
                let g = output_grad.row(r);
                let mut dot = S::zero();
                for (pi, gi) in p.iter().zip(g) {
                    dot += *pi * *gi;
                }
                for (j, d) in dlogits.row_mut(r).iter_mut().enumerate() {
                    *d = p[j] * (g[j] - dot);
                }
            }
            dlogits
        }
    }
}

pub struct LinearGrads<S: Scalar> {
    pub input: DenseMatrix<S>,
    pub weights: DenseMatrix<S>,
    pub bias: Vec<S>,
}

/// Standard affine backward from a gradient w.r.t. the logits. Weight and
/// bias gradients are summed over the batch.
pub fn linear_backward_from_logits<S: Scalar>(
    params: &LinearLayerParams<S>,
    cache: &LinearCache<S>,
    dlogits: &DenseMatrix<S>,
) -> Result<LinearGrads<S>> {
    if dlogits.rows() != cache.input.rows() || dlogits.cols() != params.fan_out() {
        return Err(Error::Contract(format!(
            "logit gradient is {}x{}, expected {}x{}",
            dlogits.rows(),
            dlogits.cols(),
            cache.input.rows(),
            params.fan_out()
        )));
    }
    let weights = cache.input.transpose().matmul(dlogits)?;
    let mut bias = vec![S::zero(); params.fan_out()];
    for r in 0..dlogits.rows() {
        for (b, d) in bias.iter_mut().zip(dlogits.row(r)) {
            *b += *d;
        }
    }
    let input = dlogits.matmul(&params.weights.transpose())?;
    Ok(LinearGrads { input, weights, bias })
}

/// Which dimensionality-reduction family fitted a memory projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionKind {
    Pca,
    Lda,
}

impl ProjectionKind {
    pub fn name(self) -> &'static str {
        match self {
            ProjectionKind::Pca => "pca",
            ProjectionKind::Lda => "lda",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "pca" => Some(ProjectionKind::Pca),
            "lda" => Some(ProjectionKind::Lda),
            _ => None,
        }
    }
}

/// A frozen, information-preserving linear projection: `(x - mean) * basis`.
/// Fitted once by the memory module and never touched by gradient descent;
/// the struct exposes no mutation path.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryProjection<S: Scalar> {
    pub kind: ProjectionKind,
    pub mean: Vec<S>,
    /// `in_dim x out_dim`; columns orthonormal for PCA.
    pub basis: DenseMatrix<S>,
    /// Eigenvalues retained by the fit, for the model manifest.
    pub eigenvalues: Vec<S>,
    /// Ridge added to the scatter/covariance diagonal during the fit.
    pub ridge: f64,
    /// PCA energy threshold that selected the basis width, when applicable.
    pub energy_threshold: Option<f64>,
}

impl<S: Scalar> MemoryProjection<S> {
    pub fn in_dim(&self) -> usize {
        self.basis.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.basis.cols()
    }

    /// Projection with zero output columns: the empty memory path used to
    /// ablate the memory variants back to plain POPfast.
    pub fn null(in_dim: usize) -> Self {
        Self {
            kind: ProjectionKind::Pca,
            mean: vec![S::zero(); in_dim],
            basis: DenseMatrix::zeros(in_dim, 0),
            eigenvalues: vec![],
            ridge: 0.0,
            energy_threshold: None,
        }
    }
}

/// Applies a memory projection: center, then project. No learnable
/// parameters are involved.
pub fn memory_apply<S: Scalar>(
    proj: &MemoryProjection<S>,
    input: &DenseMatrix<S>,
) -> Result<DenseMatrix<S>> {
    if input.cols() != proj.in_dim() {
        return Err(Error::shape(
            "memory_apply",
            format!("input has {} columns, projection expects {}", input.cols(), proj.in_dim()),
        ));
    }
    let mut centered = input.clone();
    for r in 0..centered.rows() {
        for (v, m) in centered.row_mut(r).iter_mut().zip(&proj.mean) {
            *v -= *m;
        }
    }
    centered.matmul(&proj.basis)
}

/// Gradient of `memory_apply` w.r.t. its input: `upstream * basis^T`.
/// The basis itself receives no gradient.
pub fn memory_backward<S: Scalar>(
    proj: &MemoryProjection<S>,
    upstream: &DenseMatrix<S>,
) -> Result<DenseMatrix<S>> {
    upstream.matmul(&proj.basis.transpose())
}

/// Column-wise feature concatenation, `a`'s columns first. Either side may
/// be empty (zero columns), which is the memory path at the first step.
pub fn concat_features<S: Scalar>(a: &DenseMatrix<S>, b: &DenseMatrix<S>) -> Result<DenseMatrix<S>> {
    a.hstack(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::rng::RngStream;
    use crate::ops::{ActOp, NodalOp, PoolOp};

    type M = DenseMatrix<f64>;

    fn perceptron_set() -> OperatorSet {
        OperatorSet::from_parts(NodalOp::Multiplication, PoolOp::Summation, ActOp::Sigmoid)
    }

    /// Textbook dense sigmoid layer used as the reduction oracle.
    mod reference {
        use super::M;

        pub fn forward(w: &M, b: &[f64], input: &M) -> M {
            let mut out = M::zeros(input.rows(), w.cols());
            for r in 0..input.rows() {
                for c in 0..w.cols() {
                    let mut acc = b[c];
                    for k in 0..w.rows() {
                        acc += input[(r, k)] * w[(k, c)];
                    }
                    out[(r, c)] = 1.0 / (1.0 + (-acc).exp());
                }
            }
            out
        }

        pub fn backward(w: &M, b: &[f64], input: &M, upstream: &M) -> (M, M, Vec<f64>) {
            let out = forward(w, b, input);
            let mut din = M::zeros(input.rows(), w.rows());
            let mut dw = M::zeros(w.rows(), w.cols());
            let mut db = vec![0.0; w.cols()];
            for r in 0..input.rows() {
                for c in 0..w.cols() {
                    let s = out[(r, c)];
                    let dx = upstream[(r, c)] * s * (1.0 - s);
                    db[c] += dx;
                    for k in 0..w.rows() {
                        dw[(k, c)] += dx * input[(r, k)];
                        din[(r, k)] += dx * w[(k, c)];
                    }
                }
            }
            (din, dw, db)
        }
    }

    #[test]
    fn perceptron_reduction_forward_and_backward() {
        let mut rng = RngStream::new(31, 0);
        for _ in 0..100 {
            let fan_in = 2 + rng.index(6);
            let fan_out = 1 + rng.index(5);
            let batch = 1 + rng.index(4);
            let w = M::from_vec(fan_in, fan_out, rng.uniform_vec(-1.0, 1.0, fan_in * fan_out).unwrap()).unwrap();
            let b = rng.uniform_vec(-0.5, 0.5, fan_out).unwrap();
            let input = M::from_vec(batch, fan_in, rng.uniform_vec(-2.0, 2.0, batch * fan_in).unwrap()).unwrap();
            let upstream = M::from_vec(batch, fan_out, rng.uniform_vec(-1.0, 1.0, batch * fan_out).unwrap()).unwrap();

            let params = GopLayerParams {
                weights: w.clone(),
                bias: b.clone(),
                opset: perceptron_set(),
            };
            let (out, cache) = gop_forward(&params, &input).unwrap();
            let expect = reference::forward(&w, &b, &input);
            assert!(out.max_abs_diff(&expect) < 1e-12);

            let grads = gop_backward(&params, &cache, &upstream).unwrap();
            let (rin, rw, rb) = reference::backward(&w, &b, &input, &upstream);
            assert!(grads.input.max_abs_diff(&rin) < 1e-12);
            assert!(grads.weights.max_abs_diff(&rw) < 1e-12);
            for (a, e) in grads.bias.iter().zip(&rb) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_input_pre_activation_is_bias() {
        let opset = OperatorSet::from_parts(NodalOp::Quadratic, PoolOp::Summation, ActOp::Tanh);
        let mut rng = RngStream::new(1, 0);
        let mut params = GopLayerParams::init(4, 3, opset, &mut rng).unwrap();
        params.bias = vec![0.3, -0.7, 1.1];
        let input = M::zeros(2, 4);
        let (_, cache) = gop_forward(&params, &input).unwrap();
        for b in 0..2 {
            for i in 0..3 {
                assert_eq!(cache.pre_activation()[(b, i)], params.bias[i]);
            }
        }
    }

    #[test]
    fn single_neuron_harmonic_max_relu() {
        let opset = OperatorSet::from_parts(NodalOp::Harmonic, PoolOp::Maximum, ActOp::Relu);
        let params = GopLayerParams {
            weights: M::from_vec(1, 1, vec![std::f64::consts::FRAC_PI_2]).unwrap(),
            bias: vec![0.0],
            opset,
        };
        let input = M::from_vec(1, 1, vec![1.0]).unwrap();
        let (out, _) = gop_forward(&params, &input).unwrap();
        assert!((out[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let opset = OperatorSet::from_parts(NodalOp::Gaussian, PoolOp::Correlation1, ActOp::Tanh);
        let mut rng = RngStream::new(2, 0);
        let params = GopLayerParams::init(5, 3, opset, &mut rng).unwrap();
        let input = M::from_vec(2, 5, rng.uniform_vec(-1.0, 1.0, 10).unwrap()).unwrap();
        let (_, cache) = gop_forward(&params, &input).unwrap();
        let grads = gop_backward(&params, &cache, &M::zeros(2, 3)).unwrap();
        assert_eq!(grads.weights, M::zeros(5, 3));
        assert_eq!(grads.input, M::zeros(2, 5));
        assert!(grads.bias.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn arity_violation_fails_at_construction() {
        let opset = OperatorSet::from_parts(NodalOp::Multiplication, PoolOp::Correlation2, ActOp::Relu);
        let mut rng = RngStream::new(3, 0);
        assert!(GopLayerParams::<f64>::init(2, 4, opset, &mut rng).is_err());
        assert!(GopLayerParams::<f64>::init(3, 4, opset, &mut rng).is_ok());
    }

    #[test]
    fn mismatched_cache_rejected() {
        let opset = perceptron_set();
        let mut rng = RngStream::new(4, 0);
        let params = GopLayerParams::init(4, 2, opset, &mut rng).unwrap();
        let other = GopLayerParams::init(5, 2, opset, &mut rng).unwrap();
        let input = M::zeros(3, 5);
        let (_, cache) = gop_forward(&other, &input).unwrap();
        let err = gop_backward(&params, &cache, &M::zeros(3, 2));
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn softmax_rows_normalize() {
        let mut rng = RngStream::new(6, 0);
        let params = LinearLayerParams {
            weights: M::from_vec(3, 4, rng.uniform_vec(-1.0, 1.0, 12).unwrap()).unwrap(),
            bias: vec![0.1, -0.2, 0.3, 0.0],
            activation: OutputActivation::Softmax,
        };
        let input = M::from_vec(5, 3, rng.uniform_vec(-3.0, 3.0, 15).unwrap()).unwrap();
        let (out, _) = linear_forward(&params, &input).unwrap();
        for r in 0..out.rows() {
            let sum: f64 = out.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_activation_passthrough() {
        let params = LinearLayerParams {
            weights: M::identity(3),
            bias: vec![0.0; 3],
            activation: OutputActivation::Identity,
        };
        let input = M::from_rows(&[vec![1.0, -2.0, 0.5]]).unwrap();
        let (out, _) = linear_forward(&params, &input).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn softmax_of_uniform_logits_is_uniform() {
        let params = LinearLayerParams {
            weights: M::zeros(2, 5),
            bias: vec![0.7; 5],
            activation: OutputActivation::Softmax,
        };
        let input = M::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let (out, _) = linear_forward(&params, &input).unwrap();
        for j in 0..5 {
            assert!((out[(0, j)] - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn memory_apply_centers_and_projects() {
        let proj = MemoryProjection::<f64> {
            kind: ProjectionKind::Pca,
            mean: vec![1.0, 2.0],
            basis: M::identity(2),
            eigenvalues: vec![],
            ridge: 0.0,
            energy_threshold: None,
        };
        // Input equal to the mean maps to zero.
        let input = M::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let out = memory_apply(&proj, &input).unwrap();
        assert_eq!(out, M::zeros(2, 2));
    }

    #[test]
    fn memory_apply_is_linear_after_centering() {
        let mut rng = RngStream::new(8, 0);
        let basis = M::from_vec(4, 2, rng.uniform_vec(-1.0, 1.0, 8).unwrap()).unwrap();
        let proj = MemoryProjection::<f64> {
            kind: ProjectionKind::Pca,
            mean: vec![0.0; 4],
            basis,
            eigenvalues: vec![],
            ridge: 0.0,
            energy_threshold: None,
        };
        for _ in 0..50 {
            let u = M::from_vec(3, 4, rng.uniform_vec(-1.0, 1.0, 12).unwrap()).unwrap();
            let v = M::from_vec(3, 4, rng.uniform_vec(-1.0, 1.0, 12).unwrap()).unwrap();
            let (alpha, beta) = (rng.uniform(-2.0, 2.0).unwrap(), rng.uniform(-2.0, 2.0).unwrap());
            let combo = u.scale(alpha).add(&v.scale(beta)).unwrap();
            let lhs = memory_apply(&proj, &combo).unwrap();
            let rhs = memory_apply(&proj, &u)
                .unwrap()
                .scale(alpha)
                .add(&memory_apply(&proj, &v).unwrap().scale(beta))
                .unwrap();
            assert!(lhs.max_abs_diff(&rhs) < 1e-10);
        }
    }

    #[test]
    fn orthonormal_full_basis_preserves_distances() {
        // A rotation: out_dim == in_dim with orthonormal columns.
        let theta: f64 = 0.83;
        let basis = M::from_rows(&[
            vec![theta.cos(), -theta.sin()],
            vec![theta.sin(), theta.cos()],
        ])
        .unwrap();
        let proj = MemoryProjection::<f64> {
            kind: ProjectionKind::Pca,
            mean: vec![0.3, -0.6],
            basis,
            eigenvalues: vec![],
            ridge: 0.0,
            energy_threshold: None,
        };
        let mut rng = RngStream::new(9, 0);
        let pts = M::from_vec(6, 2, rng.uniform_vec(-2.0, 2.0, 12).unwrap()).unwrap();
        let out = memory_apply(&proj, &pts).unwrap();
        for a in 0..6 {
            for b in 0..6 {
                let din = ((pts[(a, 0)] - pts[(b, 0)]).powi(2) + (pts[(a, 1)] - pts[(b, 1)]).powi(2)).sqrt();
                let dout = ((out[(a, 0)] - out[(b, 0)]).powi(2) + (out[(a, 1)] - out[(b, 1)]).powi(2)).sqrt();
                assert!((din - dout).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn concat_features_shapes() {
        let a = M::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let b = M::from_rows(&[vec![7.0, 8.0], vec![9.0, 10.0]]).unwrap();
        let ab = concat_features(&a, &b).unwrap();
        assert_eq!((ab.rows(), ab.cols()), (2, 5));
        assert_eq!(&ab.row(1)[..3], a.row(1));
        assert_eq!(&ab.row(1)[3..], b.row(1));

        let empty = M::zeros(2, 0);
        assert_eq!(concat_features(&a, &empty).unwrap(), a);
        assert_eq!(concat_features(&empty, &b).unwrap(), b);
        assert!(concat_features(&a, &M::zeros(3, 1)).is_err());
    }

    /// Finite-difference check of the full layer backward for a sample of
    /// operator sets; the acceptance suite covers all 72.
    #[test]
    fn layer_gradient_check_sampled_opsets() {
        let mut rng = RngStream::new(12, 0);
        for index in [0usize, 17, 23, 35, 46, 58, 71] {
            let opset = OperatorSet::from_index(index).unwrap();
            let params = {
                let mut p = GopLayerParams::<f64>::init(4, 3, opset, &mut rng).unwrap();
                let w = rng.uniform_vec(-0.5, 0.5, 12).unwrap();
                p.weights = M::from_vec(4, 3, w).unwrap();
                p.bias = rng.uniform_vec(-0.3, 0.3, 3).unwrap();
                p
            };
            let input = M::from_vec(2, 4, rng.uniform_vec(-1.0, 1.0, 8).unwrap()).unwrap();
            let coeff = M::from_vec(2, 3, rng.uniform_vec(-1.0, 1.0, 6).unwrap()).unwrap();

            let loss = |p: &GopLayerParams<f64>, x: &M| -> f64 {
                let (out, _) = gop_forward(p, x).unwrap();
                let mut acc = 0.0;
                for r in 0..out.rows() {
                    for c in 0..out.cols() {
                        acc += coeff[(r, c)] * out[(r, c)];
                    }
                }
                acc
            };

            let (_, cache) = gop_forward(&params, &input).unwrap();
            let grads = gop_backward(&params, &cache, &coeff).unwrap();

            let h = 1e-5;
            let check = |analytic: f64, numeric: f64| {
                let err = (analytic - numeric).abs();
                let scale = analytic.abs().max(numeric.abs());
                assert!(
                    err <= 1e-6 || err <= 1e-4 * scale,
                    "opset {}: analytic {} vs fd {}",
                    opset,
                    analytic,
                    numeric
                );
            };

            for k in 0..4 {
                for i in 0..3 {
                    let mut plus = params.clone();
                    plus.weights[(k, i)] += h;
                    let mut minus = params.clone();
                    minus.weights[(k, i)] -= h;
                    check(grads.weights[(k, i)], (loss(&plus, &input) - loss(&minus, &input)) / (2.0 * h));
                }
            }
            for i in 0..3 {
                let mut plus = params.clone();
                plus.bias[i] += h;
                let mut minus = params.clone();
                minus.bias[i] -= h;
                check(grads.bias[i], (loss(&plus, &input) - loss(&minus, &input)) / (2.0 * h));
            }
            for b in 0..2 {
                for k in 0..4 {
                    let mut plus = input.clone();
                    plus[(b, k)] += h;
                    let mut minus = input.clone();
                    minus[(b, k)] -= h;
                    check(grads.input[(b, k)], (loss(&params, &plus) - loss(&params, &minus)) / (2.0 * h));
                }
            }
        }
    }
}
