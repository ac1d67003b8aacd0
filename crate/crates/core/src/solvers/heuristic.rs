//! Alternating projected gradient descent with per-row top-`R` frequency
//! masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regularization::clamp_nonnegative;
use crate::spectral::{out_of_mask_ratio, project_frequency_mask, top_r_mask};
use crate::tensor::DataMatrix;

use super::{check_nonnegative, Quadratic, SolveReport};

/// Which projection closes an iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionOrder {
    /// frequency projection, gradient step, then `max{0, ·}`: the iterate is
    /// always nonnegative
    #[default]
    NonnegLast,
    /// gradient step, `max{0, ·}`, then frequency projection: the iterate is
    /// always band-limited but may dip below zero
    FrequencyLast,
}

/// `N` iterations on `f(H) = ‖X̄ − W̄H‖²` with the step
/// `γ_j = 1/((j+1)(2‖W̄ᵀW̄‖₂ + 1))`. Returns the last iterate.
///
/// After every frequency projection the per-row out-of-mask ratio is pushed
/// to `projection_residuals`.
pub fn alternating_pgd(
    h0: &DataMatrix,
    wbar: &DataMatrix,
    xbar: &DataMatrix,
    r: usize,
    n: usize,
    order: ProjectionOrder,
) -> Result<(DataMatrix, SolveReport)> {
    let t = h0.ncols();
    if r < 1 || r > t / 2 + 1 {
        return Err(Error::InvalidArgument(format!(
            "R = {r} outside 1..={} for T = {t}",
            t / 2 + 1
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("iteration count N must be positive".into()));
    }
    check_nonnegative(h0, "initial code")?;
    let q = Quadratic::new(xbar, wbar)?;
    q.check_code(h0)?;
    let scale = 1.0 / (q.lipschitz() + 1.0);

    let mut report = SolveReport::new();
    let mut h = h0.clone();
    let project = |h: &DataMatrix, report: &mut SolveReport| -> Result<DataMatrix> {
        let mask = top_r_mask(h, r)?;
        let p = project_frequency_mask(h, &mask)?;
        report.projection_residuals.push(out_of_mask_ratio(&p, &mask)?);
        Ok(p)
    };
    for j in 0..n {
        let gamma = scale / (j as f64 + 1.0);
        report.step_trace.push(gamma);
        if order == ProjectionOrder::NonnegLast {
            h = project(&h, &mut report)?;
        }
        h = &h - &(q.gradient(&h) * gamma);
        clamp_nonnegative(&mut h);
        if order == ProjectionOrder::FrequencyLast {
            h = project(&h, &mut report)?;
        }
        let f = q.value(&h);
        if !f.is_finite() {
            return Err(Error::NonFinite(format!("objective diverged at iteration {j}")));
        }
        report.objective_trace.push(f);
        report.wall_iters = j + 1;
    }
    Ok((h, report))
}
