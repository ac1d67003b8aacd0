//! Projected subgradient descent for the `H` subproblem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::frobenius_sq;
use crate::regularization::{clamp_nonnegative, penalty_subgradient, penalty_value, Penalty};
use crate::tensor::DataMatrix;

use super::{check_nonnegative, Quadratic, SolveReport, StepSchedule, Termination};

/// Settings for [`solve_h_pgd`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgdConfig {
    pub schedule: StepSchedule,
    /// Number of subgradient iterations `L`.
    pub iters: usize,
    /// Clamp to `H ≥ 0` after each step. Turning this off yields the
    /// unconstrained (semi-factorization without sign control) variant.
    pub project_nonneg: bool,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self {
            schedule: StepSchedule::default(),
            iters: 50,
            project_nonneg: true,
        }
    }
}

/// Minimizes `‖X̄ − W̄H‖² + ψ(H)` over `H ≥ 0` by projected subgradient steps
/// `H ← max{0, H − α_j (2(W̄ᵀW̄H − W̄ᵀX̄) + ∂ψ(H))}`.
///
/// Subgradient methods are not monotone, so the best iterate seen (the
/// starting point included) is returned. The report's objective trace holds
/// the best value after each iteration, starting with `H0`.
pub fn solve_h_pgd(
    xbar: &DataMatrix,
    wbar: &DataMatrix,
    h0: &DataMatrix,
    p: &Penalty,
    cfg: &PgdConfig,
) -> Result<(DataMatrix, SolveReport)> {
    if cfg.iters == 0 {
        return Err(Error::InvalidArgument("sub-iteration count L must be positive".into()));
    }
    if p.is_hard() {
        return Err(Error::InvalidArgument(
            "hard frequency constraints need the splitting or alternating solver".into(),
        ));
    }
    p.validate()?;
    cfg.schedule.validate()?;
    let q = Quadratic::new(xbar, wbar)?;
    q.check_code(h0)?;
    if cfg.project_nonneg {
        check_nonnegative(h0, "initial code")?;
    }

    let lip = q.lipschitz() + p.smooth_lipschitz();
    let constant = match cfg.schedule {
        StepSchedule::Diminishing { c } => c.unwrap_or(1.0 / (q.lipschitz() + 1.0)),
        StepSchedule::LipschitzScaled { gamma0 } => {
            if !(lip > 0.0) {
                return Err(Error::InvalidArgument(
                    "Lipschitz-scaled steps need a nonzero gradient Lipschitz constant".into(),
                ));
            }
            gamma0 / lip
        }
        StepSchedule::AdagradLike { gamma0 } => gamma0,
    };

    let objective = |h: &DataMatrix| q.value(h) + penalty_value(h, p);
    let mut report = SolveReport::new();
    let mut h = h0.clone();
    let mut best = h.clone();
    let mut best_f = objective(&h);
    report.objective_trace.push(best_f);
    let mut grad_energy: f64 = 0.0;

    for j in 0..cfg.iters {
        let g = q.gradient(&h) + penalty_subgradient(&h, p)?;
        let alpha = match cfg.schedule {
            StepSchedule::Diminishing { .. } => constant / (j as f64 + 1.0),
            StepSchedule::LipschitzScaled { .. } => constant,
            StepSchedule::AdagradLike { .. } => {
                grad_energy += frobenius_sq(g.view());
                if grad_energy > 0.0 {
                    constant / grad_energy.sqrt()
                } else {
                    0.0
                }
            }
        };
        report.step_trace.push(alpha);
        let mut next = &h - &(g * alpha);
        if cfg.project_nonneg {
            clamp_nonnegative(&mut next);
        }
        report.wall_iters = j + 1;
        let stalled = next == h;
        h = next;
        let f = objective(&h);
        if !f.is_finite() {
            return Err(Error::NonFinite(format!("objective diverged at sub-iteration {j}")));
        }
        if f < best_f {
            best_f = f;
            best.assign(&h);
        }
        report.objective_trace.push(best_f);
        if stalled {
            report.terminated = Termination::TolReached;
            break;
        }
    }
    Ok((best, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::{array, Array2};
    use rand::Rng;

    fn rand_matrix(seed: u64, r: usize, c: usize) -> DataMatrix {
        let mut g = rng::stream(seed, 7);
        Array2::from_shape_fn((r, c), |_| g.random_range(-1.0..1.0))
    }

    fn orthonormal_columns(seed: u64, n: usize, r: usize) -> DataMatrix {
        let mut a = rand_matrix(seed, n, r);
        for j in 0..r {
            for k in 0..j {
                let d = a.column(j).dot(&a.column(k));
                let ck = a.column(k).to_owned();
                a.column_mut(j).scaled_add(-d, &ck);
            }
            let n = a.column(j).dot(&a.column(j)).sqrt();
            a.column_mut(j).mapv_inplace(|v| v / n);
        }
        a
    }

    #[test]
    fn kkt_on_orthonormal_dictionary() {
        let wbar = orthonormal_columns(1, 8, 3);
        let xbar = rand_matrix(2, 8, 10);
        let h0 = Array2::from_elem((3, 10), 0.5);
        let cfg = PgdConfig {
            schedule: StepSchedule::LipschitzScaled { gamma0: 1.0 },
            iters: 400,
            project_nonneg: true,
        };
        let (h, _) = solve_h_pgd(&xbar, &wbar, &h0, &Penalty::none(), &cfg).unwrap();
        let want = wbar.t().dot(&xbar).mapv(|v| v.max(0.0));
        assert!((&h - &want).iter().all(|v| v.abs() < 1e-8));
        let grad = (wbar.t().dot(&wbar).dot(&h) - wbar.t().dot(&xbar)) * 2.0;
        for (hv, gv) in h.iter().zip(grad.iter()) {
            if *hv > 0.0 {
                assert!(gv.abs() < 1e-4);
            } else {
                assert!(*gv >= -1e-4);
            }
        }
    }

    #[test]
    fn default_schedule_reaches_kkt_on_orthonormal_dictionary() {
        let wbar = orthonormal_columns(3, 6, 2);
        let xbar = rand_matrix(4, 6, 5);
        let h0 = Array2::from_elem((2, 5), 1.0);
        let cfg = PgdConfig { iters: 20_000, ..PgdConfig::default() };
        let (h, _) = solve_h_pgd(&xbar, &wbar, &h0, &Penalty::none(), &cfg).unwrap();
        let want = wbar.t().dot(&xbar).mapv(|v| v.max(0.0));
        let err = (&h - &want).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-2, "{err}");
    }

    #[test]
    fn optimal_start_is_kept() {
        let wbar = array![[2.0, 0.0], [0.0, 1.0]];
        let xbar = array![[4.0, 2.0], [3.0, 1.0]];
        let h0 = array![[2.0, 1.0], [3.0, 1.0]];
        let (h, rep) = solve_h_pgd(&xbar, &wbar, &h0, &Penalty::none(), &PgdConfig::default()).unwrap();
        assert_eq!(h, h0);
        assert!(rep.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(rep.objective_trace[0], 0.0);
    }

    #[test]
    fn scalar_soft_example_goes_to_zero() {
        let zero = array![[0.0]];
        let cfg = PgdConfig {
            schedule: StepSchedule::Diminishing { c: Some(0.5) },
            iters: 10,
            project_nonneg: true,
        };
        let p = Penalty::SoftFreq { lambda: 1.0 };
        let (h, rep) = solve_h_pgd(&zero, &zero, &array![[1.0]], &p, &cfg).unwrap();
        assert_eq!(h, array![[0.0]]);
        assert_eq!(rep.terminated, Termination::TolReached);
        let mut v: f64 = 1.0;
        for j in 0..4 {
            v = (v - 0.5 / (j as f64 + 1.0)).max(0.0);
        }
        assert_eq!(v, 0.0);
    }

    #[test]
    fn best_iterate_never_worse_than_start() {
        for seed in 0..10 {
            let wbar = rand_matrix(seed, 7, 3);
            let xbar = rand_matrix(seed + 50, 7, 9);
            let h0 = rand_matrix(seed + 100, 3, 9).mapv(f64::abs);
            for p in [Penalty::Lasso { lambda: 0.5 }, Penalty::SoftFreq { lambda: 2.0 }, Penalty::Ridge { lambda: 0.1 }] {
                let (h, rep) = solve_h_pgd(&xbar, &wbar, &h0, &p, &PgdConfig::default()).unwrap();
                assert!(h.iter().all(|v| *v >= 0.0));
                assert!(rep.objective_trace.windows(2).all(|w| w[1] <= w[0]));
                assert!(*rep.objective_trace.last().unwrap() <= rep.objective_trace[0]);
            }
        }
    }

    #[test]
    fn lasso_zeroes_weak_entries_at_optimum() {
        let wbar = Array2::eye(3);
        let xbar = array![[0.2, 2.0], [1.0, -1.0], [0.05, 0.4]];
        let cfg = PgdConfig {
            schedule: StepSchedule::Diminishing { c: Some(0.5) },
            iters: 20_000,
            project_nonneg: true,
        };
        let (h, _) = solve_h_pgd(&xbar, &wbar, &Array2::zeros((3, 2)), &Penalty::Lasso { lambda: 1.0 }, &cfg).unwrap();
        let want = xbar.mapv(|v: f64| (v - 0.5).max(0.0));
        assert!((&h - &want).iter().all(|v| v.abs() < 1e-3), "{h}");
    }

    #[test]
    fn rejects_invalid_input() {
        let x = rand_matrix(1, 3, 4);
        let w = rand_matrix(2, 3, 2);
        let h0 = Array2::zeros((2, 4));
        let zero_iters = PgdConfig { iters: 0, ..PgdConfig::default() };
        assert!(solve_h_pgd(&x, &w, &h0, &Penalty::none(), &zero_iters).is_err());
        let hard = Penalty::HardFreq { mask: crate::regularization::MaskSource::TopR(1) };
        assert!(solve_h_pgd(&x, &w, &h0, &hard, &PgdConfig::default()).is_err());
        assert!(solve_h_pgd(&x, &w, &(&h0 - 1.0), &Penalty::none(), &PgdConfig::default()).is_err());
        assert!(solve_h_pgd(&x, &w, &Array2::zeros((3, 4)), &Penalty::none(), &PgdConfig::default()).is_err());
    }

    #[test]
    fn unprojected_variant_allows_negative_codes() {
        let wbar = Array2::eye(2);
        let xbar = array![[-1.0, 1.0], [2.0, -3.0]];
        let cfg = PgdConfig {
            schedule: StepSchedule::LipschitzScaled { gamma0: 1.0 },
            iters: 200,
            project_nonneg: false,
        };
        let (h, _) = solve_h_pgd(&xbar, &wbar, &Array2::zeros((2, 2)), &Penalty::none(), &cfg).unwrap();
        assert!((&h - &xbar).iter().all(|v| v.abs() < 1e-10));
    }
}
