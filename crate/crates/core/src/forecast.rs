//! Encoding of the full auxiliary record, prediction over the missing
//! period, Nash–Sutcliffe efficiency and the single-atom removal scan.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::regularization::{clamp_nonnegative, MaskSource, Penalty};
use crate::solvers::heuristic::{alternating_pgd, ProjectionOrder};
use crate::solvers::pgd::{solve_h_pgd, PgdConfig};
use crate::solvers::tos::three_operator_splitting;
use crate::solvers::{FactorModel, Quadratic, StepSchedule};
use crate::spectral::FrequencyMask;
use crate::tensor::{fold, tail_columns, DataMatrix, SpatioTemporalTensor};

/// Settings for [`encode_new`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeConfig {
    /// Solver iterations.
    #[serde(default = "default_iters")]
    pub iters: usize,
    /// Step schedule for ridge, lasso and soft penalties; constant `1/L` by default.
    #[serde(default)]
    pub schedule: Option<StepSchedule>,
    /// Mask over the full record length for a fixed hard constraint. Index
    /// masks do not carry over between series lengths, so the training mask
    /// is never reused.
    #[serde(default)]
    pub mask: Option<FrequencyMask>,
    /// Initial step of the splitting solver.
    #[serde(default = "default_gamma0")]
    pub gamma0: f64,
    /// Projection order of the alternating solver for top-`R` constraints.
    #[serde(default)]
    pub order: ProjectionOrder,
}

fn default_iters() -> usize {
    500
}

fn default_gamma0() -> f64 {
    1.0
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            iters: default_iters(),
            schedule: None,
            mask: None,
            gamma0: default_gamma0(),
            order: ProjectionOrder::NonnegLast,
        }
    }
}

/// `argmin_{H ≥ 0} ‖Y_full − W'H‖² + (λ/ξ)ψ(H)` with `p` giving the kind
/// of `ψ` and `lam_over_xi` its weight.
///
/// The solve starts from the clamped least-squares code.
pub fn encode_new(
    y_full: &DataMatrix,
    wp: &DataMatrix,
    p: &Penalty,
    lam_over_xi: f64,
    cfg: &EncodeConfig,
) -> Result<DataMatrix> {
    if wp.nrows() != y_full.nrows() {
        return Err(Error::Dimension(format!(
            "W' has {} rows but the auxiliary record has {}",
            wp.nrows(),
            y_full.nrows()
        )));
    }
    if cfg.iters == 0 {
        return Err(Error::InvalidArgument("encoding needs at least one iteration".into()));
    }
    crate::tensor::ensure_finite(y_full, "Y_full")?;
    let penalty = p.with_lambda(lam_over_xi);
    penalty.validate()?;
    let h0 = warm_start(y_full, wp);
    match &penalty {
        Penalty::HardFreq { mask: MaskSource::TopR(r) } => {
            Ok(alternating_pgd(&h0, wp, y_full, *r, cfg.iters, cfg.order)?.0)
        }
        Penalty::HardFreq { mask: MaskSource::Fixed(_) } => {
            let mask = cfg.mask.as_ref().ok_or_else(|| {
                Error::InvalidArgument(
                    "a fixed hard mask must be given for the full record length".into(),
                )
            })?;
            let q = Quadratic::new(y_full, wp)?;
            let grad = |h: &DataMatrix| q.gradient(h);
            Ok(three_operator_splitting(grad, mask, &h0, cfg.iters, cfg.gamma0)?.0)
        }
        _ => {
            let schedule = cfg.schedule.unwrap_or(StepSchedule::LipschitzScaled { gamma0: 1.0 });
            let pgd = PgdConfig { schedule, iters: cfg.iters, project_nonneg: true };
            Ok(solve_h_pgd(y_full, wp, &h0, &penalty, &pgd)?.0)
        }
    }
}

fn warm_start(y: &DataMatrix, wp: &DataMatrix) -> DataMatrix {
    let r = wp.ncols();
    match Cholesky::factor(wp.t().dot(wp).view()) {
        Ok(c) => {
            let mut h = c.solve(wp.t().dot(y).view());
            clamp_nonnegative(&mut h);
            h
        }
        Err(_) => Array2::zeros((r, y.ncols())),
    }
}

/// `fold(W·H_new, A, B)`.
pub fn predict(w: &DataMatrix, h_new: &DataMatrix, a: usize, b: usize) -> Result<SpatioTemporalTensor> {
    if w.ncols() != h_new.nrows() {
        return Err(Error::Dimension(format!(
            "W has {} atoms but the code has {} rows",
            w.ncols(),
            h_new.nrows()
        )));
    }
    fold(&w.dot(h_new), a, b)
}

/// Nash–Sutcliffe efficiency of the spatial-average series,
/// `1 − Σ_t (x̄_t − x̂_t)² / Σ_t (x̄_t − ⟨x̄⟩)²`.
pub fn nse(x_true: &DataMatrix, x_rec: &DataMatrix) -> Result<f64> {
    if x_true.dim() != x_rec.dim() {
        return Err(Error::Dimension(format!(
            "NSE needs equal shapes, got {:?} and {:?}",
            x_true.dim(),
            x_rec.dim()
        )));
    }
    if x_true.ncols() < 2 || x_true.nrows() == 0 {
        return Err(Error::InvalidArgument(format!(
            "NSE needs at least two time columns, got {:?}",
            x_true.dim()
        )));
    }
    let obs = x_true.mean_axis(Axis(0)).expect("nonempty");
    let sim = x_rec.mean_axis(Axis(0)).expect("nonempty");
    let mean = obs.mean().expect("nonempty");
    let num: f64 = obs.iter().zip(sim.iter()).map(|(o, s)| (o - s).powi(2)).sum();
    let den: f64 = obs.iter().map(|o| (o - mean).powi(2)).sum();
    if !(den > 0.0) {
        return Err(Error::InvalidArgument(
            "NSE undefined: the observed spatial-average series is constant".into(),
        ));
    }
    Ok(1.0 - num / den)
}

/// Output of [`forecast`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    /// Code of the full auxiliary record, `r × T_tot`.
    pub h_new_full: DataMatrix,
    /// Trailing `T_tot − T` columns of `h_new_full`.
    pub h_new: DataMatrix,
    pub x_pred: SpatioTemporalTensor,
    /// NSE against the held-out data, when supplied.
    pub nse: Option<f64>,
}

/// Pipeline settings: training length and spatial grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Number of training columns `T`.
    pub t_train: usize,
    /// Spatial grid `A × B` with `A·B = d`.
    pub grid: (usize, usize),
    #[serde(default)]
    pub encode: EncodeConfig,
}

/// Encode the full auxiliary record, keep the columns after `T`, predict
/// and score against `x_test` when it is given.
pub fn forecast(
    model: &FactorModel,
    y_full: &DataMatrix,
    cfg: &PipelineConfig,
    x_test: Option<&DataMatrix>,
) -> Result<ForecastResult> {
    let xi = model.hyper.xi;
    if !(xi > 0.0) {
        return Err(Error::InvalidArgument(
            "encoding weighs the penalty by λ/ξ and needs ξ > 0".into(),
        ));
    }
    if cfg.t_train >= y_full.ncols() {
        return Err(Error::Dimension(format!(
            "auxiliary record has {} columns, nothing after T = {}",
            y_full.ncols(),
            cfg.t_train
        )));
    }
    let (a, b) = cfg.grid;
    if a * b != model.w.nrows() {
        return Err(Error::Dimension(format!(
            "grid {a}x{b} does not match d = {}",
            model.w.nrows()
        )));
    }
    let p = &model.hyper.penalty;
    let h_new_full = encode_new(y_full, &model.wp, p, p.lambda() / xi, &cfg.encode)?;
    let h_new = tail_columns(&h_new_full, cfg.t_train)?;
    let x_pred = predict(&model.w, &h_new, a, b)?;
    let nse = match x_test {
        Some(x) => Some(nse(x, &model.w.dot(&h_new))?),
        None => None,
    };
    Ok(ForecastResult { h_new_full, h_new, x_pred, nse })
}

/// One line of the removal scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomRemoval {
    pub atom: usize,
    pub nse_after: f64,
    /// `nse_after − baseline`.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomScan {
    pub baseline: f64,
    /// Sorted by `nse_after`, best first.
    pub ranked: Vec<AtomRemoval>,
}

impl AtomScan {
    /// Number of report rows, the baseline included.
    pub fn rows(&self) -> usize {
        self.ranked.len() + 1
    }
}

/// The model with atom `s` dropped from `W`, `W'` (and from a fixed mask).
pub fn remove_atom(model: &FactorModel, s: usize) -> Result<FactorModel> {
    let r = model.w.ncols();
    if s >= r {
        return Err(Error::Dimension(format!("atom {s} out of range for rank {r}")));
    }
    let keep: Vec<usize> = (0..r).filter(|&k| k != s).collect();
    let mut hyper = model.hyper.clone();
    hyper.rank = r - 1;
    if let Penalty::HardFreq { mask: MaskSource::Fixed(m) } = &hyper.penalty {
        hyper.penalty = Penalty::HardFreq { mask: MaskSource::Fixed(m.without_row(s)?) };
    }
    Ok(FactorModel {
        w: model.w.select(Axis(1), &keep),
        wp: model.wp.select(Axis(1), &keep),
        h: model.h.select(Axis(0), &keep),
        hyper,
    })
}

/// NSE of the forecast after removing each single atom in turn, against
/// `x_full[:, T..]`. Each removal re-encodes with the reduced `W'`.
pub fn atom_removal_scan(
    model: &FactorModel,
    x_full: &DataMatrix,
    y_full: &DataMatrix,
    cfg: &PipelineConfig,
) -> Result<AtomScan> {
    let r = model.w.ncols();
    if r < 2 {
        return Err(Error::InvalidArgument(
            "atom removal needs at least two atoms; a rank-1 model has nothing removable".into(),
        ));
    }
    if x_full.ncols() != y_full.ncols() {
        return Err(Error::Dimension(format!(
            "data spans {} columns, auxiliary record {}",
            x_full.ncols(),
            y_full.ncols()
        )));
    }
    let x_test = tail_columns(x_full, cfg.t_train)?;
    let baseline = forecast(model, y_full, cfg, Some(&x_test))?.nse.expect("scored");
    let mut ranked = Vec::with_capacity(r);
    for s in 0..r {
        let reduced = remove_atom(model, s)?;
        let reduced_cfg = match &cfg.encode.mask {
            Some(m) => PipelineConfig {
                encode: EncodeConfig { mask: Some(m.without_row(s)?), ..cfg.encode.clone() },
                ..cfg.clone()
            },
            None => cfg.clone(),
        };
        let nse_after = forecast(&reduced, y_full, &reduced_cfg, Some(&x_test))?.nse.expect("scored");
        ranked.push(AtomRemoval { atom: s, nse_after, delta: nse_after - baseline });
    }
    ranked.sort_by(|a, b| b.nse_after.total_cmp(&a.nse_after).then(a.atom.cmp(&b.atom)));
    Ok(AtomScan { baseline, ranked })
}
