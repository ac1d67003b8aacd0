//! Spatio-temporal tensors and their matricization along the time mode.
//!
//! A tensor holds `A × B × T` values in `(a, b, t)` row-major order. Its
//! matricization is the `AB × T` matrix whose row `a·B + b` is the time series
//! of spatial cell `(a, b)`. Time columns flagged invalid in the tensor's
//! mask are dropped at matricization; the surviving calendar positions are
//! returned alongside the matrix.

use ndarray::{concatenate, s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real matrix; rows are spatial cells (or atoms), columns time steps.
pub type DataMatrix = Array2<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatioTemporalTensor {
    dims: (usize, usize, usize),
    values: Vec<f64>,
    time_mask: Option<Vec<bool>>,
}

impl SpatioTemporalTensor {
    /// Builds a tensor, validating its length and mask. Values in masked-out
    /// time slices may be non-finite (gap months); all others must be finite.
    pub fn new(
        dims: (usize, usize, usize),
        values: Vec<f64>,
        time_mask: Option<Vec<bool>>,
    ) -> Result<Self> {
        let (a, b, t) = dims;
        if values.len() != a * b * t {
            return Err(Error::Dimension(format!(
                "tensor {a}x{b}x{t} needs {} values, got {}",
                a * b * t,
                values.len()
            )));
        }
        if let Some(mask) = &time_mask {
            if mask.len() != t {
                return Err(Error::Dimension(format!(
                    "time mask has length {}, tensor has {t} time steps",
                    mask.len()
                )));
            }
            if !mask.iter().any(|&m| m) {
                return Err(Error::InvalidArgument(
                    "time mask must keep at least one time step".into(),
                ));
            }
        }
        let tensor = Self {
            dims,
            values,
            time_mask,
        };
        for (idx, v) in tensor.values.iter().enumerate() {
            let k = idx % t.max(1);
            if tensor.is_valid_time(k) && !v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "tensor value at (a={}, b={}, t={k}) is {v}",
                    idx / (b * t),
                    (idx / t) % b
                )));
            }
        }
        Ok(tensor)
    }

    pub fn zeros(dims: (usize, usize, usize)) -> Self {
        Self {
            dims,
            values: vec![0.0; dims.0 * dims.1 * dims.2],
            time_mask: None,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time_mask(&self) -> Option<&[bool]> {
        self.time_mask.as_deref()
    }

    pub fn get(&self, a: usize, b: usize, t: usize) -> f64 {
        let (_, nb, nt) = self.dims;
        self.values[(a * nb + b) * nt + t]
    }

    fn is_valid_time(&self, t: usize) -> bool {
        self.time_mask.as_ref().map_or(true, |m| m[t])
    }

    /// Frobenius norm over the valid time slices.
    pub fn frobenius(&self) -> f64 {
        let nt = self.dims.2.max(1);
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| self.is_valid_time(i % nt))
            .map(|(_, v)| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// A matricized tensor with the calendar index of each surviving column.
#[derive(Debug, Clone, PartialEq)]
pub struct Matricized {
    pub matrix: DataMatrix,
    pub columns: Vec<usize>,
}

/// Mode-3 unfolding: `result[a·B + b, k] = t[a, b, columns[k]]`.
pub fn matricize(t: &SpatioTemporalTensor) -> Matricized {
    let (na, nb, nt) = t.dims;
    let columns: Vec<usize> = (0..nt).filter(|&k| t.is_valid_time(k)).collect();
    let mut m = Array2::<f64>::zeros((na * nb, columns.len()));
    for row in 0..na * nb {
        for (c, &k) in columns.iter().enumerate() {
            m[[row, c]] = t.values[row * nt + k];
        }
    }
    Matricized { matrix: m, columns }
}

/// Inverse of [`matricize`] for dense (unmasked) tensors.
pub fn fold(m: &DataMatrix, a: usize, b: usize) -> Result<SpatioTemporalTensor> {
    if m.nrows() != a * b {
        return Err(Error::Dimension(format!(
            "cannot fold {} rows into a {a}x{b} grid",
            m.nrows()
        )));
    }
    let values = m.iter().copied().collect();
    Ok(SpatioTemporalTensor {
        dims: (a, b, m.ncols()),
        values,
        time_mask: None,
    })
}

/// Stacks auxiliary matrices vertically, in list order.
pub fn stack_auxiliary(ys: &[DataMatrix]) -> Result<DataMatrix> {
    let first = ys
        .first()
        .ok_or_else(|| Error::InvalidArgument("no auxiliary matrices to stack".into()))?;
    if let Some((i, y)) = ys
        .iter()
        .enumerate()
        .find(|(_, y)| y.ncols() != first.ncols())
    {
        return Err(Error::Dimension(format!(
            "auxiliary matrix {i} has {} columns, expected {}",
            y.ncols(),
            first.ncols()
        )));
    }
    let views: Vec<_> = ys.iter().map(|y| y.view()).collect();
    concatenate(Axis(0), &views).map_err(|e| Error::Dimension(e.to_string()))
}

/// Returns `[X; √ξ·Y]`.
pub fn supervised_stack(x: &DataMatrix, y: &DataMatrix, xi: f64) -> Result<DataMatrix> {
    check_xi(xi)?;
    if x.ncols() != y.ncols() {
        return Err(Error::Dimension(format!(
            "X has {} columns but Y has {}",
            x.ncols(),
            y.ncols()
        )));
    }
    let scaled = y * xi.sqrt();
    let mut out = Array2::<f64>::zeros((x.nrows() + y.nrows(), x.ncols()));
    out.slice_mut(s![..x.nrows(), ..]).assign(x);
    out.slice_mut(s![x.nrows().., ..]).assign(&scaled);
    Ok(out)
}

pub(crate) fn check_xi(xi: f64) -> Result<()> {
    if !(xi >= 0.0) || !xi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "supervision weight xi must be finite and nonnegative, got {xi}"
        )));
    }
    Ok(())
}

/// Rejects matrices containing NaN or infinities.
pub fn ensure_finite(m: &DataMatrix, what: &str) -> Result<()> {
    match m.indexed_iter().find(|(_, v)| !v.is_finite()) {
        Some(((r, c), v)) => Err(Error::NonFinite(format!("{what}[{r}, {c}] = {v}"))),
        None => Ok(()),
    }
}

/// Leading `t` columns.
pub fn head_columns(m: &DataMatrix, t: usize) -> Result<DataMatrix> {
    if t > m.ncols() {
        return Err(Error::Dimension(format!(
            "requested {t} leading columns from a matrix with {}",
            m.ncols()
        )));
    }
    Ok(m.slice(s![.., ..t]).to_owned())
}

/// Columns from `t` to the end.
pub fn tail_columns(m: &DataMatrix, t: usize) -> Result<DataMatrix> {
    if t > m.ncols() {
        return Err(Error::Dimension(format!(
            "cannot slice from column {t} of a matrix with {}",
            m.ncols()
        )));
    }
    Ok(m.slice(s![.., t..]).to_owned())
}
