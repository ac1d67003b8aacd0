//! SSNMF under a hard frequency constraint on the code.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regularization::{MaskSource, Penalty};
use crate::tensor::DataMatrix;

use super::bcd::{run_bcd, BcdOptions, HStep};
use super::heuristic::{alternating_pgd, ProjectionOrder};
use super::tos::three_operator_splitting;
use super::{data_misfit, FactorModel, Hyper, Quadratic, SolveReport};

/// How the constrained `H` step is solved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HardVariant {
    /// Three-operator splitting against a fixed mask.
    Tos {
        #[serde(default = "one")]
        gamma0: f64,
    },
    /// Alternating projected gradient with per-row top-`R` masks.
    Heuristic {
        #[serde(default)]
        order: ProjectionOrder,
    },
}

fn one() -> f64 {
    1.0
}

/// BCD where each `H` step uses `opts.inner.iters` iterations of the chosen
/// constrained solver, warm-started at the current code.
///
/// The penalty in `hyper` must be [`Penalty::HardFreq`]: with a fixed mask
/// for [`HardVariant::Tos`] and with `TopR` for [`HardVariant::Heuristic`].
/// The report traces the data misfit `‖X − WH‖² + ξ‖Y − W'H‖²` plus the
/// dictionary ridge terms, without the indicator.
pub fn ssnmf_hard(
    x: &DataMatrix,
    y: &DataMatrix,
    hyper: &Hyper,
    variant: HardVariant,
    opts: &BcdOptions,
) -> Result<(FactorModel, SolveReport)> {
    let source = match &hyper.penalty {
        Penalty::HardFreq { mask } => mask.clone(),
        other => {
            return Err(Error::InvalidArgument(format!(
                "ssnmf_hard needs a hard frequency penalty, got {other:?}"
            )))
        }
    };
    let inner = opts.inner.iters;
    let trace = |x: &DataMatrix, y: &DataMatrix, m: &FactorModel| -> Result<f64> {
        let mut v = data_misfit(x, y, m)?;
        v += m.hyper.lambda_w * crate::linalg::frobenius_sq(m.w.view());
        v += m.hyper.lambda_wp * crate::linalg::frobenius_sq(m.wp.view());
        Ok(v)
    };
    match (variant, source) {
        (HardVariant::Tos { gamma0 }, MaskSource::Fixed(mask)) => {
            if mask.len() != x.ncols() || mask.rows() != hyper.rank {
                return Err(Error::Dimension(format!(
                    "mask covers {} rows over T = {}, model needs {} rows over T = {}",
                    mask.rows(),
                    mask.len(),
                    hyper.rank,
                    x.ncols()
                )));
            }
            run_bcd(
                x,
                y,
                hyper,
                opts,
                |xbar, wbar, h| {
                    let q = Quadratic::new(xbar, wbar)?;
                    let grad = |h: &DataMatrix| q.gradient(h);
                    let (h, rep) = three_operator_splitting(grad, &mask, h, inner, gamma0)?;
                    Ok(HStep { h, steps: rep.step_trace, residuals: Vec::new() })
                },
                trace,
            )
        }
        (HardVariant::Heuristic { order }, MaskSource::TopR(r)) => run_bcd(
            x,
            y,
            hyper,
            opts,
            |xbar, wbar, h| {
                let start = if order == ProjectionOrder::FrequencyLast {
                    crate::regularization::prox_nonnegative(h)
                } else {
                    h.clone()
                };
                let (h, rep) = alternating_pgd(&start, wbar, xbar, r, inner, order)?;
                Ok(HStep { h, steps: rep.step_trace, residuals: rep.projection_residuals })
            },
            trace,
        ),
        (HardVariant::Tos { .. }, MaskSource::TopR(_)) => Err(Error::InvalidArgument(
            "the splitting variant needs a fixed mask for the training length".into(),
        )),
        (HardVariant::Heuristic { .. }, MaskSource::Fixed(_)) => Err(Error::InvalidArgument(
            "the alternating variant derives its masks from R; give MaskSource::TopR".into(),
        )),
    }
}
