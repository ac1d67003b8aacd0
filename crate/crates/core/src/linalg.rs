//! Small dense linear algebra used by the solvers.
//!
//! Systems here are `r × r` with `r` the factorization rank, so plain
//! Cholesky and cyclic Jacobi are all that is needed.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Relative pivot threshold below which a Gram matrix is declared singular.
pub const SINGULAR_PIVOT_REL: f64 = 1e-12;

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Array2<f64>,
}

impl Cholesky {
    pub fn factor(a: ArrayView2<'_, f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!(
                "Cholesky needs a square matrix, got {}x{}",
                n,
                a.ncols()
            )));
        }
        let scale = (0..n).map(|i| a[[i, i]].abs()).fold(0.0, f64::max);
        let tol = SINGULAR_PIVOT_REL * scale.max(f64::MIN_POSITIVE);
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut d = a[[j, j]];
            for k in 0..j {
                d -= l[[j, k]] * l[[j, k]];
            }
            if !(d > tol) {
                return Err(Error::Singular { index: j, pivot: d });
            }
            let d = d.sqrt();
            l[[j, j]] = d;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / d;
            }
        }
        Ok(Self { l })
    }

    /// Solve `A X = B` for every column of `B`.
    pub fn solve(&self, b: ArrayView2<'_, f64>) -> Array2<f64> {
        let n = self.l.nrows();
        let mut x = b.to_owned();
        for c in 0..x.ncols() {
            for i in 0..n {
                let mut s = x[[i, c]];
                for k in 0..i {
                    s -= self.l[[i, k]] * x[[k, c]];
                }
                x[[i, c]] = s / self.l[[i, i]];
            }
            for i in (0..n).rev() {
                let mut s = x[[i, c]];
                for k in (i + 1)..n {
                    s -= self.l[[k, i]] * x[[k, c]];
                }
                x[[i, c]] = s / self.l[[i, i]];
            }
        }
        x
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(a: ArrayView2<'_, f64>) -> Array1<f64> {
    let n = a.nrows();
    let mut m = a.to_owned();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum();
        let diag: f64 = (0..n).map(|i| m[[i, i]] * m[[i, i]]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[[i, i]]).collect();
    ev.sort_by(f64::total_cmp);
    Array1::from(ev)
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn symmetric_spectral_norm(a: ArrayView2<'_, f64>) -> f64 {
    symmetric_eigenvalues(a)
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn frobenius_sq(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

pub fn frobenius(a: ArrayView2<'_, f64>) -> f64 {
    frobenius_sq(a).sqrt()
}

/// Entrywise inner product `⟨a, b⟩`.
pub fn inner(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
