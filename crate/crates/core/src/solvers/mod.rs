//! Optimization procedures for the SSNMF objective
//!
//! ```text
//! ‖X − W H‖² + ξ‖Y − W' H‖² + ψ(H) + λ₁‖W‖² + λ₂‖W'‖²,   H ≥ 0.
//! ```
//!
//! The `H` subproblems are solved on the supervised stack `X̄ = [X; √ξ Y]`,
//! `W̄ = [W; √ξ W']`; the dictionaries have closed-form ridge solutions.

pub mod bcd;
pub mod hard;
pub mod heuristic;
pub mod least_squares;
pub mod pgd;
pub mod tos;

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::frobenius_sq;
use crate::regularization::{penalty_value, Penalty};
use crate::rng;
use crate::tensor::{check_xi, DataMatrix};

pub use bcd::{ssnmf_bcd, BcdOptions};
pub use hard::{ssnmf_hard, HardVariant};
pub use heuristic::{alternating_pgd, ProjectionOrder};
pub use least_squares::solve_w;
pub use pgd::{solve_h_pgd, PgdConfig};
pub use tos::three_operator_splitting;

/// Model hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    /// Factorization rank `r`.
    pub rank: usize,
    /// Supervision weight `ξ`.
    pub xi: f64,
    /// Ridge weight `λ₁` on `W`.
    #[serde(default)]
    pub lambda_w: f64,
    /// Ridge weight `λ₂` on `W'`.
    #[serde(default)]
    pub lambda_wp: f64,
    pub penalty: Penalty,
}

impl Hyper {
    pub fn new(rank: usize, xi: f64, penalty: Penalty) -> Self {
        Self {
            rank,
            xi,
            lambda_w: 0.0,
            lambda_wp: 0.0,
            penalty,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::InvalidArgument("rank must be at least 1".into()));
        }
        check_xi(self.xi)?;
        for (name, v) in [("lambda_w", self.lambda_w), ("lambda_wp", self.lambda_wp)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        self.penalty.validate()
    }
}

/// Learned dictionaries and code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    pub w: DataMatrix,
    pub wp: DataMatrix,
    pub h: DataMatrix,
    pub hyper: Hyper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxIters,
    TolReached,
}

/// Trace of a solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Objective after each iteration (outer iterations for the BCD drivers).
    pub objective_trace: Vec<f64>,
    /// Step sizes in the order they were used.
    pub step_trace: Vec<f64>,
    /// BCD only: objective after the `H`, `W` and `W'` updates of each sweep.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub block_trace: Vec<[f64; 3]>,
    /// Per-row out-of-mask ratios recorded after frequency projections.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub projection_residuals: Vec<Vec<f64>>,
    pub terminated: Termination,
    pub wall_iters: usize,
}

impl SolveReport {
    pub(crate) fn new() -> Self {
        Self {
            objective_trace: Vec::new(),
            step_trace: Vec::new(),
            block_trace: Vec::new(),
            projection_residuals: Vec::new(),
            terminated: Termination::MaxIters,
            wall_iters: 0,
        }
    }
}

/// Step-size rule for the projected subgradient `H` update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    /// `α_j = c/(j+1)`; `c` defaults to `1/(2‖W̄ᵀW̄‖₂ + 1)`.
    Diminishing {
        #[serde(default)]
        c: Option<f64>,
    },
    /// `α_j = γ₀ / √(Σ_{τ≤j} ‖g_τ‖²)`.
    AdagradLike { gamma0: f64 },
    /// Constant `α = γ₀ / L` with `L` the gradient Lipschitz constant.
    LipschitzScaled { gamma0: f64 },
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Diminishing { c: None }
    }
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            StepSchedule::Diminishing { c: None } => return Ok(()),
            StepSchedule::Diminishing { c: Some(c) } => c,
            StepSchedule::AdagradLike { gamma0 } | StepSchedule::LipschitzScaled { gamma0 } => gamma0,
        };
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "step-size constant must be positive, got {v}"
            )))
        }
    }
}

/// Squared data misfit `‖X − WH‖² + ξ‖Y − W'H‖²`.
pub fn data_misfit(x: &DataMatrix, y: &DataMatrix, model: &FactorModel) -> Result<f64> {
    check_shapes(x, y, model)?;
    let rx = x - &model.w.dot(&model.h);
    let ry = y - &model.wp.dot(&model.h);
    Ok(frobenius_sq(rx.view()) + model.hyper.xi * frobenius_sq(ry.view()))
}

/// Full objective including `ψ(H)` and the dictionary ridge terms.
pub fn objective(x: &DataMatrix, y: &DataMatrix, model: &FactorModel) -> Result<f64> {
    let misfit = data_misfit(x, y, model)?;
    let hp = &model.hyper;
    let mut total = misfit + penalty_value(&model.h, &hp.penalty);
    if hp.lambda_w != 0.0 {
        total += hp.lambda_w * frobenius_sq(model.w.view());
    }
    if hp.lambda_wp != 0.0 {
        total += hp.lambda_wp * frobenius_sq(model.wp.view());
    }
    Ok(total)
}

fn check_shapes(x: &DataMatrix, y: &DataMatrix, m: &FactorModel) -> Result<()> {
    let r = m.h.nrows();
    let t = m.h.ncols();
    if m.w.dim() != (x.nrows(), r) || m.wp.dim() != (y.nrows(), r) || x.ncols() != t || y.ncols() != t
    {
        return Err(Error::Dimension(format!(
            "X {:?}, Y {:?} inconsistent with W {:?}, W' {:?}, H {:?}",
            x.dim(),
            y.dim(),
            m.w.dim(),
            m.wp.dim(),
            m.h.dim()
        )));
    }
    Ok(())
}

/// Random starting point: `W, W'` with i.i.d. `N(0,1)/√r` entries and
/// `H = |N(0,1)|`.
pub fn initial_factors(d: usize, dy: usize, t: usize, r: usize, seed: u64) -> (DataMatrix, DataMatrix, DataMatrix) {
    let scale = 1.0 / (r as f64).sqrt();
    let draw = |label: &str, shape: (usize, usize), f: &dyn Fn(f64) -> f64| {
        let mut g = rng::stream(seed, rng::stream_id(label));
        Array2::from_shape_fn(shape, |_| f(StandardNormal.sample(&mut g)))
    };
    let w = draw("init/W", (d, r), &|z| z * scale);
    let wp = draw("init/Wp", (dy, r), &|z| z * scale);
    let h = draw("init/H", (r, t), &|z: f64| z.abs());
    (w, wp, h)
}

pub(crate) fn check_nonnegative(h: &DataMatrix, what: &str) -> Result<()> {
    match h.indexed_iter().find(|(_, v)| !(**v >= 0.0)) {
        Some(((i, j), v)) => Err(Error::InvalidArgument(format!(
            "{what} must be nonnegative, found {v} at [{i}, {j}]"
        ))),
        None => Ok(()),
    }
}

/// Least-squares pieces of `‖X̄ − W̄H‖²`: `G = W̄ᵀW̄`, `B = W̄ᵀX̄`, `‖X̄‖²`.
#[derive(Debug, Clone)]
pub(crate) struct Quadratic {
    pub g: DataMatrix,
    pub b: DataMatrix,
    pub xx: f64,
}

impl Quadratic {
    pub fn new(xbar: &DataMatrix, wbar: &DataMatrix) -> Result<Self> {
        if xbar.nrows() != wbar.nrows() {
            return Err(Error::Dimension(format!(
                "X̄ has {} rows but W̄ has {}",
                xbar.nrows(),
                wbar.nrows()
            )));
        }
        Ok(Self {
            g: wbar.t().dot(wbar),
            b: wbar.t().dot(xbar),
            xx: frobenius_sq(xbar.view()),
        })
    }

    pub fn check_code(&self, h: &DataMatrix) -> Result<()> {
        if h.nrows() != self.g.nrows() || h.ncols() != self.b.ncols() {
            return Err(Error::Dimension(format!(
                "code is {:?}, expected {}x{}",
                h.dim(),
                self.g.nrows(),
                self.b.ncols()
            )));
        }
        Ok(())
    }

    pub fn value(&self, h: &DataMatrix) -> f64 {
        let gh = self.g.dot(h);
        let v = self.xx - 2.0 * (&self.b * h).sum() + (h * &gh).sum();
        v.max(0.0)
    }

    pub fn gradient(&self, h: &DataMatrix) -> DataMatrix {
        (self.g.dot(h) - &self.b) * 2.0
    }

    /// `2‖G‖₂`, the Lipschitz constant of the gradient.
    pub fn lipschitz(&self) -> f64 {
        2.0 * crate::linalg::symmetric_spectral_norm(self.g.view())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularization::MaskSource;
    use crate::spectral::FrequencyMask;
    use rand::Rng;

    fn rand_matrix(seed: u64, r: usize, c: usize) -> DataMatrix {
        let mut g = rng::stream(seed, 5);
        Array2::from_shape_fn((r, c), |_| g.random_range(-1.0..1.0))
    }

    fn model(w: DataMatrix, wp: DataMatrix, h: DataMatrix, hyper: Hyper) -> FactorModel {
        FactorModel { w, wp, h, hyper }
    }

    #[test]
    fn zero_model_gives_data_energy() {
        let x = rand_matrix(1, 4, 6);
        let y = rand_matrix(2, 3, 6);
        for p in [
            Penalty::Lasso { lambda: 2.0 },
            Penalty::SoftFreq { lambda: 5.0 },
            Penalty::HardFreq { mask: MaskSource::Fixed(FrequencyMask::uniform(6, 2, &[0]).unwrap()) },
        ] {
            let m = model(Array2::zeros((4, 2)), Array2::zeros((3, 2)), Array2::zeros((2, 6)), Hyper::new(2, 3.0, p));
            let f = objective(&x, &y, &m).unwrap();
            let want = frobenius_sq(x.view()) + 3.0 * frobenius_sq(y.view());
            assert!((f - want).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_factorization_is_zero() {
        let w = rand_matrix(3, 5, 2);
        let wp = rand_matrix(4, 3, 2);
        let h = rand_matrix(5, 2, 7).mapv(f64::abs);
        let m = model(w.clone(), wp.clone(), h.clone(), Hyper::new(2, 2.0, Penalty::none()));
        let f = objective(&w.dot(&h), &wp.dot(&h), &m).unwrap();
        assert!(f.abs() < 1e-24);
    }

    #[test]
    fn objective_matches_termwise_recompute() {
        let x = rand_matrix(6, 4, 8);
        let y = rand_matrix(7, 2, 8);
        let (w, wp, h) = initial_factors(4, 2, 8, 3, 9);
        let mut hyper = Hyper::new(3, 0.7, Penalty::Lasso { lambda: 0.3 });
        hyper.lambda_w = 0.1;
        hyper.lambda_wp = 0.2;
        let m = model(w.clone(), wp.clone(), h.clone(), hyper);
        let mut want = 0.0;
        for i in 0..4 {
            for j in 0..8 {
                let p: f64 = (0..3).map(|s| w[[i, s]] * h[[s, j]]).sum();
                want += (x[[i, j]] - p).powi(2);
            }
        }
        for i in 0..2 {
            for j in 0..8 {
                let p: f64 = (0..3).map(|s| wp[[i, s]] * h[[s, j]]).sum();
                want += 0.7 * (y[[i, j]] - p).powi(2);
            }
        }
        want += 0.3 * h.iter().map(|v| v.abs()).sum::<f64>();
        want += 0.1 * w.iter().map(|v| v * v).sum::<f64>();
        want += 0.2 * wp.iter().map(|v| v * v).sum::<f64>();
        assert!((objective(&x, &y, &m).unwrap() - want).abs() < 1e-10 * want);
    }

    #[test]
    fn infeasible_hard_code_is_infinite() {
        let x = rand_matrix(1, 3, 8);
        let y = rand_matrix(2, 2, 8);
        let mask = FrequencyMask::uniform(8, 2, &[0]).unwrap();
        let (w, wp, h) = initial_factors(3, 2, 8, 2, 4);
        let m = model(w, wp, h, Hyper::new(2, 1.0, Penalty::HardFreq { mask: MaskSource::Fixed(mask) }));
        assert_eq!(objective(&x, &y, &m).unwrap(), f64::INFINITY);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let (w, wp, h) = initial_factors(3, 2, 8, 2, 4);
        let m = model(w, wp, h, Hyper::new(2, 1.0, Penalty::none()));
        assert!(matches!(
            objective(&rand_matrix(1, 3, 7), &rand_matrix(1, 2, 8), &m),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn initialization_is_seeded_and_nonnegative() {
        let a = initial_factors(5, 4, 9, 3, 17);
        let b = initial_factors(5, 4, 9, 3, 17);
        let c = initial_factors(5, 4, 9, 3, 18);
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
        assert!(a.2.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn quadratic_matches_direct_misfit() {
        let xbar = rand_matrix(11, 6, 5);
        let wbar = rand_matrix(12, 6, 2);
        let h = rand_matrix(13, 2, 5);
        let q = Quadratic::new(&xbar, &wbar).unwrap();
        let direct = frobenius_sq((&xbar - &wbar.dot(&h)).view());
        assert!((q.value(&h) - direct).abs() < 1e-10);
    }

    #[test]
    fn schedule_serde_shape() {
        let s: StepSchedule = serde_json::from_str(r#"{"kind":"lipschitz_scaled","gamma0":0.5}"#).unwrap();
        assert_eq!(s, StepSchedule::LipschitzScaled { gamma0: 0.5 });
        let d: StepSchedule = serde_json::from_str(r#"{"kind":"diminishing"}"#).unwrap();
        assert_eq!(d, StepSchedule::default());
        assert!(StepSchedule::AdagradLike { gamma0: 0.0 }.validate().is_err());
    }
}
