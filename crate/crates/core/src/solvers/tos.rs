//! Davis–Yin three-operator splitting for
//! `min f(H) + ι_{H≥0}(H) + ι_{mask}(H)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::frobenius_sq;
use crate::regularization::{prox_hard_mask, prox_nonnegative};
use crate::spectral::FrequencyMask;
use crate::tensor::DataMatrix;

use super::{SolveReport, Termination};

/// Step rule for the smooth term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TosStep {
    /// `γ_j = 1/√(Σ_{τ<j} ‖∇f(H_τ)‖²)`, with `γ_0 = gamma0`.
    Adaptive { gamma0: f64 },
    /// Fixed `γ`; converges for `γ < 2/L`.
    Constant { gamma: f64 },
}

/// Runs `N` iterations from `y0` with the adaptive step and returns the
/// ergodic average `H̄_N = (1/(N+1)) Σ_{τ=0}^{N} H_τ`.
pub fn three_operator_splitting<F>(
    grad_f: F,
    mask: &FrequencyMask,
    y0: &DataMatrix,
    n: usize,
    gamma0: f64,
) -> Result<(DataMatrix, SolveReport)>
where
    F: Fn(&DataMatrix) -> DataMatrix,
{
    let (avg, _, rep) = three_operator_splitting_with(grad_f, mask, y0, n, TosStep::Adaptive { gamma0 })?;
    Ok((avg, rep))
}

/// General form: returns the ergodic average, the final governing sequence
/// `y_{N+1}` (so that `‖y_0 − y_{N+1}‖/(N+1)` bounds the average's distance
/// to the mask subspace) and the report.
///
/// Each iteration computes
/// `H_j = max{0, y_j}`,
/// `G_j = P_mask(2H_j − y_j − γ_j ∇f(H_j))`,
/// `y_{j+1} = y_j − H_j + G_j`.
pub fn three_operator_splitting_with<F>(
    grad_f: F,
    mask: &FrequencyMask,
    y0: &DataMatrix,
    n: usize,
    step: TosStep,
) -> Result<(DataMatrix, DataMatrix, SolveReport)>
where
    F: Fn(&DataMatrix) -> DataMatrix,
{
    let g = match step {
        TosStep::Adaptive { gamma0 } => gamma0,
        TosStep::Constant { gamma } => gamma,
    };
    if !(g > 0.0) || !g.is_finite() {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {g}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("iteration count N must be positive".into()));
    }
    let mut report = SolveReport::new();
    let mut y = y0.clone();
    let mut sum = DataMatrix::zeros(y0.dim());
    let mut grad_energy: f64 = 0.0;
    for j in 0..=n {
        let h = prox_nonnegative(&y);
        let grad = grad_f(&h);
        if grad.dim() != h.dim() {
            return Err(Error::Dimension(format!(
                "gradient oracle returned {:?} for a {:?} code",
                grad.dim(),
                h.dim()
            )));
        }
        let gamma = match step {
            TosStep::Constant { gamma } => gamma,
            TosStep::Adaptive { gamma0 } if j == 0 => gamma0,
            TosStep::Adaptive { .. } if grad_energy > 0.0 => 1.0 / grad_energy.sqrt(),
            TosStep::Adaptive { gamma0 } => gamma0,
        };
        grad_energy += frobenius_sq(grad.view());
        report.step_trace.push(gamma);
        sum += &h;
        if j == n {
            break;
        }
        let reflected = &h * 2.0 - &y - &(grad * gamma);
        let gj = prox_hard_mask(&reflected, mask)?;
        y = y - &h + gj;
        report.wall_iters = j + 1;
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("splitting iterates diverged".into()));
    }
    report.terminated = Termination::MaxIters;
    let avg = sum / (n as f64 + 1.0);
    Ok((avg, y, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius;
    use crate::rng;
    use crate::spectral::{out_of_mask_ratio, project_frequency_mask};
    use ndarray::Array2;
    use rand::Rng;

    fn rand_matrix(seed: u64, r: usize, c: usize) -> DataMatrix {
        let mut g = rng::stream(seed, 9);
        Array2::from_shape_fn((r, c), |_| g.random_range(-1.0..1.0))
    }

    #[test]
    fn full_mask_reduces_to_nonneg_projection() {
        let v = rand_matrix(1, 2, 8);
        let mask = FrequencyMask::full(8, 2);
        let grad = |h: &DataMatrix| (h - &v) * 2.0;
        let (avg, _) = three_operator_splitting(grad, &mask, &Array2::zeros((2, 8)), 20_000, 1.0).unwrap();
        let want = prox_nonnegative(&v);
        assert!(frobenius((&avg - &want).view()) < 1e-2, "{avg}");
        let (_, y, _) = three_operator_splitting_with(grad, &mask, &Array2::zeros((2, 8)), 500, TosStep::Constant { gamma: 0.25 }).unwrap();
        assert!(frobenius((&prox_nonnegative(&y) - &want).view()) < 1e-10);
    }

    #[test]
    fn feasible_point_is_fixed_when_f_vanishes() {
        let mask = FrequencyMask::uniform(10, 2, &[0, 1, 9]).unwrap();
        let base = Array2::from_shape_fn((2, 10), |(s, t)| {
            2.0 + (s as f64 + 1.0) * (2.0 * std::f64::consts::PI * t as f64 / 10.0).cos()
        });
        let zero = |h: &DataMatrix| Array2::zeros(h.dim());
        let (avg, _) = three_operator_splitting(zero, &mask, &base, 50, 1.0).unwrap();
        assert!(frobenius((&avg - &base).view()) < 1e-12);
    }

    #[test]
    fn ergodic_average_approaches_mask_set() {
        let wbar = rand_matrix(3, 6, 2);
        let xbar = rand_matrix(4, 6, 8);
        let mask = FrequencyMask::uniform(8, 2, &[0, 1, 7]).unwrap();
        let g = wbar.t().dot(&wbar);
        let b = wbar.t().dot(&xbar);
        let grad = |h: &DataMatrix| (g.dot(h) - &b) * 2.0;
        let y0 = Array2::from_elem((2, 8), 1.0);
        let dist = |n| {
            let (avg, _) = three_operator_splitting(grad, &mask, &y0, n, 1.0).unwrap();
            assert!(avg.iter().all(|v| *v >= 0.0));
            frobenius((&avg - &project_frequency_mask(&avg, &mask).unwrap()).view())
        };
        let d1 = dist(100);
        let d2 = dist(10_000);
        assert!(d2 < d1 && d2 <= 1e-3, "{d1} {d2}");
        let (avg, _) = three_operator_splitting(grad, &mask, &y0, 10_000, 1.0).unwrap();
        assert!(out_of_mask_ratio(&avg, &mask).unwrap().iter().all(|r| *r < 1e-2));
    }

    #[test]
    fn rejects_bad_arguments() {
        let mask = FrequencyMask::full(4, 1);
        let y0 = Array2::zeros((1, 4));
        let grad = |h: &DataMatrix| h.clone();
        assert!(three_operator_splitting(grad, &mask, &y0, 0, 1.0).is_err());
        assert!(three_operator_splitting(grad, &mask, &y0, 5, 0.0).is_err());
        assert!(three_operator_splitting(grad, &FrequencyMask::full(5, 1), &y0, 5, 1.0).is_err());
    }
}
