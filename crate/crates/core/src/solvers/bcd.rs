//! Block coordinate descent over `(H, W, W')`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regularization::Penalty;
use crate::tensor::{head_columns, supervised_stack, DataMatrix};

use super::least_squares::solve_w;
use super::pgd::{solve_h_pgd, PgdConfig};
use super::{initial_factors, objective, FactorModel, Hyper, SolveReport, Termination};

/// Outer-loop settings shared by the BCD drivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcdOptions {
    /// Outer iterations `N`.
    pub outer_iters: usize,
    /// `H`-step settings; `iters` is the sub-iteration count `L`.
    pub inner: PgdConfig,
    /// Stop once `|f_j − f_{j−1}| / max(1, f_{j−1})` drops below this.
    pub tol: Option<f64>,
    pub seed: u64,
}

impl Default for BcdOptions {
    fn default() -> Self {
        Self {
            outer_iters: 100,
            inner: PgdConfig::default(),
            tol: Some(1e-8),
            seed: 0,
        }
    }
}

/// Result of one `H` step inside the driver.
pub(crate) struct HStep {
    pub h: DataMatrix,
    pub steps: Vec<f64>,
    pub residuals: Vec<Vec<f64>>,
}

/// Alternates an `H` step with the closed-form `W` and `W'` updates.
///
/// `trace_value` is what gets recorded in the report; the hard-constraint
/// driver records the data misfit only.
pub(crate) fn run_bcd<F, V>(
    x: &DataMatrix,
    y: &DataMatrix,
    hyper: &Hyper,
    opts: &BcdOptions,
    mut h_step: F,
    trace_value: V,
) -> Result<(FactorModel, SolveReport)>
where
    F: FnMut(&DataMatrix, &DataMatrix, &DataMatrix) -> Result<HStep>,
    V: Fn(&DataMatrix, &DataMatrix, &FactorModel) -> Result<f64>,
{
    hyper.validate()?;
    if opts.outer_iters == 0 {
        return Err(Error::InvalidArgument("outer iteration count N must be positive".into()));
    }
    let (d, t) = x.dim();
    if y.ncols() < t {
        return Err(Error::Dimension(format!(
            "auxiliary data has {} columns, fewer than the {t} training columns",
            y.ncols()
        )));
    }
    let y = if y.ncols() == t { y.clone() } else { head_columns(y, t)? };
    let r = hyper.rank;
    if r > d.min(t) {
        return Err(Error::InvalidArgument(format!(
            "rank {r} exceeds min(d, T) = {}",
            d.min(t)
        )));
    }
    crate::tensor::ensure_finite(x, "X")?;
    crate::tensor::ensure_finite(&y, "Y")?;

    let (w, wp, h) = initial_factors(d, y.nrows(), t, r, opts.seed);
    let mut model = FactorModel { w, wp, h, hyper: hyper.clone() };
    let xi = hyper.xi;
    let xbar = supervised_stack(x, &y, xi)?;
    let wp_ridge = if xi > 0.0 { hyper.lambda_wp / xi } else { hyper.lambda_wp };

    let mut report = SolveReport::new();
    let mut prev = trace_value(x, &y, &model)?;
    for it in 0..opts.outer_iters {
        let wbar = supervised_stack(&model.w, &model.wp, xi)?;
        let step = h_step(&xbar, &wbar, &model.h)?;
        model.h = step.h;
        report.step_trace.extend(step.steps);
        report.projection_residuals.extend(step.residuals);
        let after_h = trace_value(x, &y, &model)?;

        model.w = solve_w(x, &model.h, hyper.lambda_w)?;
        let after_w = trace_value(x, &y, &model)?;
        model.wp = solve_w(&y, &model.h, wp_ridge)?;
        let after_wp = trace_value(x, &y, &model)?;

        report.block_trace.push([after_h, after_w, after_wp]);
        report.objective_trace.push(after_wp);
        report.wall_iters = it + 1;
        if !after_wp.is_finite() {
            return Err(Error::NonFinite(format!("objective diverged at outer iteration {it}")));
        }
        if let Some(tol) = opts.tol {
            if (after_wp - prev).abs() / prev.max(1.0) < tol {
                report.terminated = Termination::TolReached;
                break;
            }
        }
        prev = after_wp;
    }
    Ok((model, report))
}

/// SSNMF with ridge, lasso or soft frequency regularization of the code.
///
/// `y` may span more columns than `x`; only its first `T` columns are used.
/// The model is the last iterate.
pub fn ssnmf_bcd(x: &DataMatrix, y: &DataMatrix, hyper: &Hyper, opts: &BcdOptions) -> Result<(FactorModel, SolveReport)> {
    if hyper.penalty.is_hard() {
        return Err(Error::InvalidArgument(
            "hard frequency constraints are handled by ssnmf_hard".into(),
        ));
    }
    let penalty: Penalty = hyper.penalty.clone();
    let inner = opts.inner;
    run_bcd(
        x,
        y,
        hyper,
        opts,
        |xbar, wbar, h| {
            let (h, rep) = solve_h_pgd(xbar, wbar, h, &penalty, &inner)?;
            Ok(HStep { h, steps: rep.step_trace, residuals: Vec::new() })
        },
        objective,
    )
}
