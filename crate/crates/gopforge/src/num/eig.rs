//! Symmetric eigendecomposition via cyclic Jacobi rotations.
//!
//! Adequate and robust for the dense covariance/scatter matrices produced by
//! the memory projections (dimensions up to a few thousand). Nonsymmetric
//! problems are out of scope; LDA is reduced to two symmetric problems by
//! whitening instead.

use crate::error::{Error, Result};
use crate::num::matrix::DenseMatrix;
use crate::scalar::Scalar;

/// Absolute tolerance for the symmetry check on each mirrored pair.
const SYMMETRY_TOL: f64 = 1e-9;

/// Sweep budget; cyclic Jacobi converges quadratically and typically needs
/// fewer than 15 sweeps even at n = 1000.
const MAX_SWEEPS: usize = 64;

/// Eigenvalues in descending order with matching orthonormal eigenvector
/// columns: `input = vectors * diag(values) * vectors^T`.
#[derive(Debug, Clone)]
pub struct SymEig<S: Scalar> {
    pub values: Vec<S>,
    pub vectors: DenseMatrix<S>,
}

/// Decomposes a symmetric matrix. Symmetry is verified within `1e-9`
/// absolute on each mirrored pair before any work is done.
pub fn sym_eig<S: Scalar>(m: &DenseMatrix<S>) -> Result<SymEig<S>> {
    let n = m.rows();
    if n != m.cols() {
        return Err(Error::shape("sym_eig", format!("{}x{} is not square", m.rows(), m.cols())));
    }
    let tol = S::of(SYMMETRY_TOL);
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return Err(Error::invalid(format!(
                    "sym_eig input is asymmetric at ({}, {}): {} vs {}",
                    i, j, m[(i, j)], m[(j, i)]
                )));
            }
        }
    }
    if n == 0 {
        return Ok(SymEig { values: vec![], vectors: DenseMatrix::zeros(0, 0) });
    }

    let mut a = m.clone();
    // Enforce exact symmetry so rotations stay consistent.
    let half = S::of(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (a[(i, j)] + a[(j, i)]) * half;
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let mut v = DenseMatrix::<S>::identity(n);

    let off_tol = S::of(1e-30) * (S::one() + a.frobenius_norm());
    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        let mut off = S::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= off_tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }
    if !converged {
        // One final check: the last sweep may have finished the job.
        let mut off = S::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() > off_tol {
            return Err(Error::NoConvergence { sweeps: MAX_SWEEPS });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<S> = (0..n).map(|i| a[(i, i)]).collect();
    // Descending by eigenvalue; index breaks exact ties deterministically.
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap().then(i.cmp(&j)));

    let values: Vec<S> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        // Canonical sign: the entry of largest magnitude is positive.
        let col = v.column(old_col);
        let mut lead = S::zero();
        for &x in &col {
            if x.abs() > lead.abs() {
                lead = x;
            }
        }
        let flip = lead < S::zero();
        for r in 0..n {
            vectors[(r, new_col)] = if flip { -col[r] } else { col[r] };
        }
    }

    Ok(SymEig { values, vectors })
}

/// One Jacobi rotation annihilating `a[(p, q)]`, accumulated into `v`.
/// Uses the numerically stable Rutishauser formulation.
fn rotate<S: Scalar>(a: &mut DenseMatrix<S>, v: &mut DenseMatrix<S>, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == S::zero() {
        return;
    }
    let app = a[(p, p)];
    let aqq = a[(q, q)];
    let theta = (aqq - app) / (S::of(2.0) * apq);
    let t = {
        let denom = theta.abs() + (theta * theta + S::one()).sqrt();
        let t = S::one() / denom;
        if theta < S::zero() {
            -t
        } else {
            t
        }
    };
    let c = S::one() / (t * t + S::one()).sqrt();
    let s = t * c;
    let tau = s / (S::one() + c);

    let n = a.rows();
    a[(p, p)] = app - t * apq;
    a[(q, q)] = aqq + t * apq;
    a[(p, q)] = S::zero();
    a[(q, p)] = S::zero();
    for k in 0..n {
        if k != p && k != q {
            let akp = a[(k, p)];
            let akq = a[(k, q)];
            let new_kp = akp - s * (akq + tau * akp);
            let new_kq = akq + s * (akp - tau * akq);
            a[(k, p)] = new_kp;
            a[(p, k)] = new_kp;
            a[(k, q)] = new_kq;
            a[(q, k)] = new_kq;
        }
    }
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp - s * (vkq + tau * vkp);
        v[(k, q)] = vkq + s * (vkp - tau * vkq);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::rng::RngStream;

    type M = DenseMatrix<f64>;

    fn reconstruct(e: &SymEig<f64>) -> M {
        let n = e.values.len();
        let lambda = M::from_fn(n, n, |i, j| if i == j { e.values[i] } else { 0.0 });
        e.vectors
            .matmul(&lambda)
            .unwrap()
            .matmul(&e.vectors.transpose())
            .unwrap()
    }

    #[test]
    fn diagonal_matrix() {
        let m = M::from_rows(&[
            vec![3.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ])
        .unwrap();
        let e = sym_eig(&m).unwrap();
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
        // Axis-aligned eigenvectors, permuted to the sorted order.
        for (col, axis) in [(0usize, 0usize), (1, 2), (2, 1)] {
            for r in 0..3 {
                let expect = if r == axis { 1.0 } else { 0.0 };
                assert!((e.vectors[(r, col)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_matrix() {
        let e = sym_eig(&M::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn classic_two_by_two() {
        let m = M::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = sym_eig(&m).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors[(0, 0)] - inv_sqrt2).abs() < 1e-12);
        assert!((e.vectors[(1, 0)] - inv_sqrt2).abs() < 1e-12);
        assert!((e.vectors[(0, 1)].abs() - inv_sqrt2).abs() < 1e-12);
        assert!((e.vectors[(0, 1)] + e.vectors[(1, 1)]).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_input_rejected() {
        let m = M::from_rows(&[vec![1.0, 2.0], vec![2.1, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&m), Err(Error::Invalid(_))));
    }

    #[test]
    fn random_reconstruction_and_orthonormality() {
        let mut rng = RngStream::new(19, 0);
        for n in [2usize, 5, 9, 16] {
            let b = M::from_vec(n, n, rng.uniform_vec(-2.0, 2.0, n * n).unwrap()).unwrap();
            // b + b^T is symmetric.
            let m = b.add(&b.transpose()).unwrap();
            let e = sym_eig(&m).unwrap();

            let rec = reconstruct(&e);
            let denom = m.frobenius_norm().max(1.0);
            assert!(rec.sub(&m).unwrap().frobenius_norm() / denom < 1e-8);

            let vtv = e.vectors.transpose().matmul(&e.vectors).unwrap();
            assert!(vtv.sub(&M::identity(n)).unwrap().frobenius_norm() < 1e-8);

            for w in e.values.windows(2) {
                assert!(w[0] >= w[1]);
            }

            // Residual check per eigenpair.
            for i in 0..n {
                let v = M::from_vec(n, 1, e.vectors.column(i)).unwrap();
                let mv = m.matmul(&v).unwrap();
                let lv = v.scale(e.values[i]);
                assert!(mv.sub(&lv).unwrap().frobenius_norm() <= 1e-8 * denom);
            }
        }
    }
}
