//! Row-wise discrete Fourier analysis of temporal codes.
//!
//! The forward transform uses `1/T` scaling,
//! `Â[s,k] = (1/T) Σ_f A[s,f] e^{-2πifk/T}`, and the inverse is the unscaled
//! sum `A[s,t] = Σ_k Â[s,k] e^{+2πikt/T}`. With this convention
//! `‖Â‖_F² = ‖A‖_F² / T`.

use std::cell::RefCell;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::DataMatrix;

/// Relative imaginary residue tolerated when inverting a spectrum to a real matrix.
pub const IMAG_RESIDUE_REL: f64 = 1e-8;

/// Coefficients below this fraction of a row's total amplitude count as zero
/// in [`inverse_usage_ratio`].
pub const SPECTRAL_ZERO_REL: f64 = 1e-12;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Per-row DFT coefficients of an `r × T` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    values: Array2<Complex64>,
}

impl ComplexSpectrum {
    pub fn new(values: Array2<Complex64>) -> Self {
        Self { values }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(Array2::zeros((rows, cols)))
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.values
    }

    pub fn into_inner(self) -> Array2<Complex64> {
        self.values
    }

    /// Largest deviation from `Ĥ[s,k] = conj(Ĥ[s, T-k mod T])`.
    pub fn symmetry_defect(&self) -> f64 {
        let t = self.cols();
        let mut worst = 0.0_f64;
        for row in self.values.rows() {
            for k in 0..t {
                let mirror = (t - k) % t;
                worst = worst.max((row[k] - row[mirror].conj()).norm());
            }
        }
        worst
    }

    /// Squared Frobenius norm `Σ |Ĥ[s,k]|²`.
    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Power spectrum `|Ĥ[s,k]|²`.
    pub fn power(&self) -> Array2<f64> {
        self.values.mapv(|z| z.norm_sqr())
    }

    pub fn amplitude(&self) -> Array2<f64> {
        self.values.mapv(|z| z.norm())
    }
}

/// Conjugate-closed sets of retained DFT indices, one per row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawMask")]
pub struct FrequencyMask {
    t: usize,
    kept: Vec<Vec<usize>>,
}

#[derive(Deserialize)]
struct RawMask {
    t: usize,
    kept: Vec<Vec<usize>>,
}

impl TryFrom<RawMask> for FrequencyMask {
    type Error = Error;

    fn try_from(raw: RawMask) -> Result<Self> {
        FrequencyMask::new(raw.t, raw.kept)
    }
}

impl FrequencyMask {
    /// Builds a mask from per-row index sets. Every set must already be
    /// closed under `k ↦ (T-k) mod T`.
    pub fn new(t: usize, kept: Vec<Vec<usize>>) -> Result<Self> {
        let mut rows = Vec::with_capacity(kept.len());
        for (s, row) in kept.into_iter().enumerate() {
            let mut row = row;
            row.sort_unstable();
            row.dedup();
            if let Some(&k) = row.iter().find(|&&k| k >= t) {
                return Err(Error::InvalidArgument(format!(
                    "mask row {s} keeps index {k} >= T = {t}"
                )));
            }
            if let Some(&k) = row.iter().find(|&&k| row.binary_search(&((t - k) % t)).is_err()) {
                return Err(Error::InvalidArgument(format!(
                    "mask row {s} keeps {k} but not its mirror {}",
                    (t - k) % t
                )));
            }
            rows.push(row);
        }
        Ok(Self { t, kept: rows })
    }

    /// Mask that closes each given set under mirroring.
    pub fn symmetric(t: usize, kept: Vec<Vec<usize>>) -> Result<Self> {
        if t == 0 {
            return Err(Error::InvalidArgument("mask over T = 0".into()));
        }
        let closed = kept
            .into_iter()
            .map(|row| row.iter().flat_map(|&k| [k, (t - k % t) % t]).collect())
            .collect();
        Self::new(t, closed)
    }

    /// Every row keeps every frequency.
    pub fn full(t: usize, rows: usize) -> Self {
        Self {
            t,
            kept: vec![(0..t).collect(); rows],
        }
    }

    /// The same index set for every row.
    pub fn uniform(t: usize, rows: usize, kept: &[usize]) -> Result<Self> {
        Self::new(t, vec![kept.to_vec(); rows])
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        self.t == 0
    }

    pub fn rows(&self) -> usize {
        self.kept.len()
    }

    pub fn row(&self, s: usize) -> &[usize] {
        &self.kept[s]
    }

    pub fn keeps(&self, s: usize, k: usize) -> bool {
        self.kept[s].binary_search(&k).is_ok()
    }

    /// The mask with row `s` dropped.
    pub fn without_row(&self, s: usize) -> Result<Self> {
        if s >= self.kept.len() {
            return Err(Error::Dimension(format!(
                "mask has {} rows, cannot drop row {s}",
                self.kept.len()
            )));
        }
        let mut kept = self.kept.clone();
        kept.remove(s);
        Ok(Self { t: self.t, kept })
    }

    fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if self.t != cols || self.kept.len() != rows {
            return Err(Error::Dimension(format!(
                "mask is {} rows over T = {}, matrix is {rows}x{cols}",
                self.kept.len(),
                self.t
            )));
        }
        Ok(())
    }
}

/// Row-wise forward DFT with `1/T` scaling.
pub fn dft_rows(a: &DataMatrix) -> ComplexSpectrum {
    let (r, t) = a.dim();
    let mut out = Array2::<Complex64>::zeros((r, t));
    if t == 0 {
        return ComplexSpectrum::new(out);
    }
    let fft = plan(t, false);
    let scale = 1.0 / t as f64;
    let mut buf = vec![Complex64::new(0.0, 0.0); t];
    for (src, mut dst) in a.rows().into_iter().zip(out.rows_mut()) {
        for (b, v) in buf.iter_mut().zip(src.iter()) {
            *b = Complex64::new(*v, 0.0);
        }
        fft.process(&mut buf);
        for (d, b) in dst.iter_mut().zip(&buf) {
            *d = b * scale;
        }
    }
    ComplexSpectrum::new(out)
}

/// Unscaled inverse of a complex spectrum, row by row.
pub fn idft_rows_complex(spec: &ComplexSpectrum) -> Array2<Complex64> {
    let (r, t) = spec.values.dim();
    let mut out = Array2::<Complex64>::zeros((r, t));
    if t == 0 {
        return out;
    }
    let fft = plan(t, true);
    let mut buf = vec![Complex64::new(0.0, 0.0); t];
    for (src, mut dst) in spec.values.rows().into_iter().zip(out.rows_mut()) {
        buf.iter_mut().zip(src.iter()).for_each(|(b, v)| *b = *v);
        fft.process(&mut buf);
        dst.iter_mut().zip(&buf).for_each(|(d, b)| *d = *b);
    }
    out
}

/// Inverse DFT to a real matrix. Fails if the inverse carries an imaginary
/// part larger than [`IMAG_RESIDUE_REL`] relative to its real part.
pub fn idft_rows(spec: &ComplexSpectrum) -> Result<DataMatrix> {
    let z = idft_rows_complex(spec);
    let re_norm = z.iter().map(|c| c.re * c.re).sum::<f64>().sqrt();
    let im_norm = z.iter().map(|c| c.im * c.im).sum::<f64>().sqrt();
    if im_norm > IMAG_RESIDUE_REL * re_norm.max(f64::MIN_POSITIVE) && im_norm > 1e-300 {
        return Err(Error::NotConjugateSymmetric {
            residue: im_norm / re_norm.max(f64::MIN_POSITIVE),
        });
    }
    Ok(z.mapv(|c| c.re))
}

/// Minkowski 1-norm `Σ |Re z| + |Im z|`.
pub fn minkowski1(spec: &ComplexSpectrum) -> f64 {
    spec.values.iter().map(|z| z.re.abs() + z.im.abs()).sum()
}

fn sign_with_band(v: f64, band: f64) -> f64 {
    if v.abs() <= band {
        0.0
    } else {
        v.signum()
    }
}

/// Subgradient of `H ↦ ‖Ĥ‖_{1,M}`.
///
/// Returns `(1/T) Re((sign(Re Ĥ) + i·sign(Im Ĥ)) 𝓕_T⁻¹)`, the exact gradient
/// wherever no coefficient has a vanishing real or imaginary part. At kinks
/// the zero selection `sign(0) = 0` is used; coefficients within round-off of
/// zero are treated as zero.
pub fn minkowski_subgradient(h: &DataMatrix) -> DataMatrix {
    let (r, t) = h.dim();
    if t == 0 {
        return Array2::zeros((r, t));
    }
    let spec = dft_rows(h);
    let mut signs = Array2::<Complex64>::zeros((r, t));
    for (src, mut dst) in spec.values.rows().into_iter().zip(signs.rows_mut()) {
        let scale = src.iter().fold(0.0_f64, |m, z| m.max(z.re.abs()).max(z.im.abs()));
        let band = 64.0 * f64::EPSILON * scale;
        for (d, z) in dst.iter_mut().zip(src.iter()) {
            *d = Complex64::new(sign_with_band(z.re, band), sign_with_band(z.im, band));
        }
    }
    let inv = idft_rows_complex(&ComplexSpectrum::new(signs));
    let scale = 1.0 / t as f64;
    inv.mapv(|c| c.re * scale)
}

/// Keeps only the masked DFT coefficients of every row.
pub fn project_frequency_mask(h: &DataMatrix, mask: &FrequencyMask) -> Result<DataMatrix> {
    mask.check_shape(h.nrows(), h.ncols())?;
    let mut spec = dft_rows(h);
    for (s, mut row) in spec.values.rows_mut().into_iter().enumerate() {
        for (k, z) in row.iter_mut().enumerate() {
            if !mask.keeps(s, k) {
                *z = Complex64::new(0.0, 0.0);
            }
        }
    }
    let z = idft_rows_complex(&spec);
    Ok(z.mapv(|c| c.re))
}

/// Fraction of a row's spectral energy that lies outside the mask, per row.
pub fn out_of_mask_ratio(h: &DataMatrix, mask: &FrequencyMask) -> Result<Vec<f64>> {
    mask.check_shape(h.nrows(), h.ncols())?;
    let spec = dft_rows(h);
    Ok(spec
        .values
        .rows()
        .into_iter()
        .enumerate()
        .map(|(s, row)| {
            let total: f64 = row.iter().map(|z| z.norm_sqr()).sum();
            let outside: f64 = row
                .iter()
                .enumerate()
                .filter(|(k, _)| !mask.keeps(s, *k))
                .map(|(_, z)| z.norm_sqr())
                .sum();
            if total > 0.0 {
                (outside / total).sqrt()
            } else {
                0.0
            }
        })
        .collect())
}

/// The `R` dominant frequencies of a row among `0..=⌊T/2⌋`, with mirrors.
///
/// Candidates are ranked by `|Ĥ[k]|`; equal magnitudes go to the lower index.
pub fn top_r_indices(row: ArrayView1<'_, f64>, r: usize) -> Result<Vec<usize>> {
    let t = row.len();
    let half = t / 2;
    if r < 1 || r > half + 1 {
        return Err(Error::InvalidArgument(format!(
            "R = {r} outside 1..={} for T = {t}",
            half + 1
        )));
    }
    let spec = dft_rows(&row.to_owned().insert_axis(ndarray::Axis(0)));
    let amp: Vec<f64> = spec.values.row(0).iter().map(|z| z.norm()).collect();
    let mut cand: Vec<usize> = (0..=half).collect();
    cand.sort_by(|&i, &j| amp[j].total_cmp(&amp[i]).then(i.cmp(&j)));
    let mut kept: Vec<usize> = cand[..r]
        .iter()
        .flat_map(|&k| [k, (t - k) % t])
        .collect();
    kept.sort_unstable();
    kept.dedup();
    Ok(kept)
}

/// Per-row top-`R` mask of a code matrix.
pub fn top_r_mask(h: &DataMatrix, r: usize) -> Result<FrequencyMask> {
    let kept = h
        .rows()
        .into_iter()
        .map(|row| top_r_indices(row, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(FrequencyMask { t: h.ncols(), kept })
}

/// Inverse usage ratio `μ[s,k] = Σ_l |Ĥ[s,l]| / |Ĥ[s,k]|`; unused
/// coefficients map to `+∞`.
pub fn inverse_usage_ratio(h: &DataMatrix) -> Result<Array2<f64>> {
    let amp = dft_rows(h).amplitude();
    let mut mu = Array2::<f64>::zeros(amp.dim());
    for (s, (row, mut out)) in amp.rows().into_iter().zip(mu.rows_mut()).enumerate() {
        let total: f64 = row.sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "row {s} has an identically zero spectrum"
            )));
        }
        for (m, a) in out.iter_mut().zip(row.iter()) {
            *m = if *a <= SPECTRAL_ZERO_REL * total {
                f64::INFINITY
            } else {
                total / a
            };
        }
    }
    Ok(mu)
}

/// Index of the strongest non-DC frequency among `1..=⌊T/2⌋` for each row.
pub fn dominant_frequency(h: &DataMatrix) -> Vec<usize> {
    let amp = dft_rows(h).amplitude();
    let half = h.ncols() / 2;
    amp.rows()
        .into_iter()
        .map(|row| {
            (1..=half)
                .max_by(|&i, &j| row[i].total_cmp(&row[j]).then(j.cmp(&i)))
                .unwrap_or(0)
        })
        .collect()
}
