//! Fitting the frozen memory projections: PCA keeping a fixed fraction of
//! the spectrum energy, and LDA with `C - 1` discriminant directions.
//!
//! Both fits center the data at the origin and add a ridge to the diagonal
//! of the covariance / within-class scatter before decomposing, so
//! singular inputs survive. LDA is solved by whitening the within-class
//! scatter and eigendecomposing the whitened between-class scatter, which
//! keeps the kernel surface at symmetric problems only.

use crate::error::{Error, Result};
use crate::layers::{MemoryProjection, ProjectionKind};
use crate::num::eig::sym_eig;
use crate::num::matrix::DenseMatrix;
use crate::scalar::Scalar;

pub const DEFAULT_ENERGY_THRESHOLD: f64 = 0.98;
pub const DEFAULT_RIDGE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcaFitSpec {
    /// Fraction of the (ridged) eigenvalue mass the basis must retain.
    pub energy_threshold: f64,
    pub ridge: f64,
}

impl Default for PcaFitSpec {
    fn default() -> Self {
        Self {
            energy_threshold: DEFAULT_ENERGY_THRESHOLD,
            ridge: DEFAULT_RIDGE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdaFitSpec {
    pub num_classes: usize,
    pub ridge: f64,
}

impl LdaFitSpec {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            ridge: DEFAULT_RIDGE,
        }
    }
}

fn center<S: Scalar>(x: &DenseMatrix<S>, mean: &[S]) -> DenseMatrix<S> {
    let mut b = x.clone();
    for r in 0..b.rows() {
        for (v, m) in b.row_mut(r).iter_mut().zip(mean) {
            *v -= *m;
        }
    }
    b
}

fn add_ridge<S: Scalar>(m: &mut DenseMatrix<S>, ridge: f64) {
    let r = S::of(ridge);
    for i in 0..m.rows() {
        m[(i, i)] += r;
    }
}

/// PCA fit: covariance `B^T B / (n - 1) + ridge * I` on centered data,
/// basis = the minimal leading eigenvector set whose cumulative eigenvalue
/// fraction reaches the energy threshold. At least one axis is always kept.
pub fn fit_pca<S: Scalar>(x: &DenseMatrix<S>, spec: &PcaFitSpec) -> Result<MemoryProjection<S>> {
    if x.rows() < 2 {
        return Err(Error::invalid(format!(
            "PCA needs at least 2 samples, got {}",
            x.rows()
        )));
    }
    if !(spec.energy_threshold > 0.0 && spec.energy_threshold <= 1.0) {
        return Err(Error::invalid("PCA energy threshold must be in (0, 1]"));
    }
    if spec.ridge < 0.0 {
        return Err(Error::invalid("ridge must be >= 0"));
    }

    let mean = x.column_means();
    let b = center(x, &mean);
    let mut cov = b.transpose().matmul(&b)?;
    let denom = S::of((x.rows() - 1) as f64);
    cov = cov.map(|v| v / denom);
    add_ridge(&mut cov, spec.ridge);

    let eig = sym_eig(&cov)?;
    // The energy fraction is computed over the ridged spectrum; both sums
    // run left to right so the threshold-1.0 case keeps every axis.
    let total: S = eig.values.iter().fold(S::zero(), |a, &b| a + b);
    let target = S::of(spec.energy_threshold) * total;
    let mut cum = S::zero();
    let mut keep = eig.values.len();
    for (i, &v) in eig.values.iter().enumerate() {
        cum += v;
        if cum >= target {
            keep = i + 1;
            break;
        }
    }
    let keep = keep.max(1);

    let d = x.cols();
    let basis = DenseMatrix::from_fn(d, keep, |i, j| eig.vectors[(i, j)]);
    Ok(MemoryProjection {
        kind: ProjectionKind::Pca,
        mean,
        basis,
        eigenvalues: eig.values[..keep].to_vec(),
        ridge: spec.ridge,
        energy_threshold: Some(spec.energy_threshold),
    })
}

/// LDA fit via whitening: eigendecompose the ridged within-class scatter,
/// whiten, eigendecompose the whitened between-class scatter and keep the
/// top `C - 1` directions.
pub fn fit_lda<S: Scalar>(
    x: &DenseMatrix<S>,
    labels: &[usize],
    spec: &LdaFitSpec,
) -> Result<MemoryProjection<S>> {
    let c = spec.num_classes;
    if c < 2 {
        return Err(Error::invalid("LDA needs at least 2 classes"));
    }
    if labels.len() != x.rows() {
        return Err(Error::shape(
            "fit_lda",
            format!("{} rows vs {} labels", x.rows(), labels.len()),
        ));
    }
    let d = x.cols();
    if c - 1 > d {
        return Err(Error::invalid(format!(
            "LDA output dimension C-1 = {} exceeds the feature dimension {}",
            c - 1,
            d
        )));
    }
    if spec.ridge < 0.0 {
        return Err(Error::invalid("ridge must be >= 0"));
    }
    let mut counts = vec![0usize; c];
    for &l in labels {
        if l >= c {
            return Err(Error::invalid(format!("label {} out of range [0, {})", l, c)));
        }
        counts[l] += 1;
    }
    if let Some(empty) = counts.iter().position(|&n| n == 0) {
        return Err(Error::invalid(format!("class {} has no samples", empty)));
    }

    let mean = x.column_means();
    let mut class_means = vec![vec![S::zero(); d]; c];
    for (r, &l) in labels.iter().enumerate() {
        for (m, v) in class_means[l].iter_mut().zip(x.row(r)) {
            *m += *v;
        }
    }
    for (means, &n) in class_means.iter_mut().zip(&counts) {
        let n = S::of(n as f64);
        for m in means {
            *m /= n;
        }
    }

    // Within-class scatter with ridge.
    let mut s_w = DenseMatrix::<S>::zeros(d, d);
    for (r, &l) in labels.iter().enumerate() {
        let cm = &class_means[l];
        let row = x.row(r);
        for i in 0..d {
            let di = row[i] - cm[i];
            for j in i..d {
                let dj = row[j] - cm[j];
                s_w[(i, j)] += di * dj;
            }
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            s_w[(j, i)] = s_w[(i, j)];
        }
    }
    add_ridge(&mut s_w, spec.ridge);

    // Between-class scatter of the centered class means.
    let mut s_b = DenseMatrix::<S>::zeros(d, d);
    for (cm, &n) in class_means.iter().zip(&counts) {
        let n = S::of(n as f64);
        for i in 0..d {
            let di = cm[i] - mean[i];
            for j in i..d {
                let dj = cm[j] - mean[j];
                s_b[(i, j)] += n * di * dj;
            }
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            s_b[(j, i)] = s_b[(i, j)];
        }
    }

    let eig_w = sym_eig(&s_w)?;
    let floor = S::of(1e-12);
    for &v in &eig_w.values {
        if v <= floor {
            return Err(Error::invalid(
                "within-class scatter is numerically singular; increase the ridge",
            ));
        }
    }
    // Whitening transform W = U * diag(1/sqrt(lambda)).
    let whiten = DenseMatrix::from_fn(d, d, |i, j| eig_w.vectors[(i, j)] / eig_w.values[j].sqrt());

    let mut m = whiten.transpose().matmul(&s_b)?.matmul(&whiten)?;
    // Exact symmetrization before the second decomposition.
    let half = S::of(0.5);
    for i in 0..d {
        for j in (i + 1)..d {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let eig_b = sym_eig(&m)?;

    let out_dim = c - 1;
    let top = DenseMatrix::from_fn(d, out_dim, |i, j| eig_b.vectors[(i, j)]);
    let mut basis = whiten.matmul(&top)?;
    // Unit-length columns; scale carries no information here.
    for j in 0..out_dim {
        let mut sq = S::zero();
        for i in 0..d {
            sq += basis[(i, j)] * basis[(i, j)];
        }
        let norm = sq.sqrt();
        if norm > S::zero() {
            for i in 0..d {
                basis[(i, j)] /= norm;
            }
        }
    }

    Ok(MemoryProjection {
        kind: ProjectionKind::Lda,
        mean,
        basis,
        eigenvalues: eig_b.values[..out_dim].to_vec(),
        ridge: spec.ridge,
        energy_threshold: None,
    })
}
