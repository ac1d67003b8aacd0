//! Closed-form dictionary updates.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::tensor::DataMatrix;

/// `W = X Hᵀ (H Hᵀ + ridge·I)⁻¹`, the minimizer of `‖X − WH‖² + ridge‖W‖²`.
///
/// With `ridge = 0` a rank-deficient `H` is reported as
/// [`Error::Singular`] rather than resolved by a pseudo-inverse.
pub fn solve_w(x: &DataMatrix, h: &DataMatrix, ridge: f64) -> Result<DataMatrix> {
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "ridge weight must be finite and nonnegative, got {ridge}"
        )));
    }
    if x.ncols() != h.ncols() {
        return Err(Error::Dimension(format!(
            "X has {} columns but H has {}",
            x.ncols(),
            h.ncols()
        )));
    }
    let r = h.nrows();
    let mut gram = h.dot(&h.t());
    if ridge > 0.0 {
        gram += &(Array2::<f64>::eye(r) * ridge);
    }
    let rhs = h.dot(&x.t());
    let wt = Cholesky::factor(gram.view())?.solve(rhs.view());
    Ok(wt.reversed_axes())
}
