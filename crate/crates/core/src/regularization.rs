//! Penalties on the temporal code and the proximal maps used by the
//! splitting solvers.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, FrequencyMask};
use crate::tensor::DataMatrix;

/// Relative band for declaring out-of-mask DFT coefficients zero.
pub const HARD_FEASIBILITY_REL: f64 = 1e-8;

/// Where a hard frequency constraint gets its retained index sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskSource {
    /// A prescribed conjugate-closed mask.
    Fixed(FrequencyMask),
    /// The top `R` frequencies of each row, recomputed from the current code.
    TopR(usize),
}

/// Penalty `ψ(H)` on the temporal code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Penalty {
    /// `λ‖H‖_F²`
    Ridge { lambda: f64 },
    /// `λ‖H‖₁`
    Lasso { lambda: f64 },
    /// `λ‖Ĥ‖_{1,M}`
    SoftFreq { lambda: f64 },
    /// Indicator of `{H : Ĥ vanishes outside the mask}`.
    HardFreq { mask: MaskSource },
}

impl Penalty {
    pub fn none() -> Self {
        Penalty::Ridge { lambda: 0.0 }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            Penalty::Ridge { lambda } | Penalty::Lasso { lambda } | Penalty::SoftFreq { lambda } => {
                *lambda
            }
            Penalty::HardFreq { .. } => 0.0,
        }
    }

    /// Same penalty kind with a different weight; hard constraints are unchanged.
    pub fn with_lambda(&self, lambda: f64) -> Self {
        match self {
            Penalty::Ridge { .. } => Penalty::Ridge { lambda },
            Penalty::Lasso { .. } => Penalty::Lasso { lambda },
            Penalty::SoftFreq { .. } => Penalty::SoftFreq { lambda },
            Penalty::HardFreq { mask } => Penalty::HardFreq { mask: mask.clone() },
        }
    }

    /// True when the penalty adds nothing nonsmooth to a least-squares objective.
    pub fn is_smooth(&self) -> bool {
        match self {
            Penalty::Ridge { .. } => true,
            Penalty::Lasso { lambda } | Penalty::SoftFreq { lambda } => *lambda == 0.0,
            Penalty::HardFreq { .. } => false,
        }
    }

    pub fn is_hard(&self) -> bool {
        matches!(self, Penalty::HardFreq { .. })
    }

    /// Lipschitz constant of the penalty's gradient (ridge only).
    pub fn smooth_lipschitz(&self) -> f64 {
        match self {
            Penalty::Ridge { lambda } => 2.0 * lambda,
            _ => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lambda = self.lambda();
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "penalty weight must be finite and nonnegative, got {lambda}"
            )));
        }
        if let Penalty::HardFreq { mask: MaskSource::TopR(0) } = self {
            return Err(Error::InvalidArgument("hard constraint needs R >= 1".into()));
        }
        Ok(())
    }
}

/// The mask a hard constraint imposes on `h`.
pub fn resolve_mask(h: &DataMatrix, source: &MaskSource) -> Result<FrequencyMask> {
    match source {
        MaskSource::Fixed(m) => Ok(m.clone()),
        MaskSource::TopR(r) => spectral::top_r_mask(h, *r),
    }
}

/// `ψ(H)`; `+∞` for a hard constraint that `H` violates.
pub fn penalty_value(h: &DataMatrix, p: &Penalty) -> f64 {
    match p {
        Penalty::Ridge { lambda } => lambda * h.iter().map(|v| v * v).sum::<f64>(),
        Penalty::Lasso { lambda } => lambda * h.iter().map(|v| v.abs()).sum::<f64>(),
        Penalty::SoftFreq { lambda } => lambda * spectral::minkowski1(&spectral::dft_rows(h)),
        Penalty::HardFreq { mask } => {
            if h.is_empty() {
                return 0.0;
            }
            let mask = match resolve_mask(h, mask) {
                Ok(m) => m,
                Err(_) => return f64::INFINITY,
            };
            if mask.rows() != h.nrows() || mask.len() != h.ncols() {
                return f64::INFINITY;
            }
            let spec = spectral::dft_rows(h);
            let band = HARD_FEASIBILITY_REL * spec.frobenius_sq().sqrt();
            let feasible = spec
                .values()
                .indexed_iter()
                .all(|((s, k), z)| mask.keeps(s, k) || z.norm() <= band);
            if feasible {
                0.0
            } else {
                f64::INFINITY
            }
        }
    }
}

/// A subgradient of `ψ` at `H` (with `sign(0) = 0`).
pub fn penalty_subgradient(h: &DataMatrix, p: &Penalty) -> Result<DataMatrix> {
    match p {
        Penalty::Ridge { lambda } => Ok(h * (2.0 * lambda)),
        Penalty::Lasso { lambda } => Ok(h.mapv(|v| if v == 0.0 { 0.0 } else { lambda * v.signum() })),
        Penalty::SoftFreq { lambda } => {
            if *lambda == 0.0 {
                Ok(Array2::zeros(h.dim()))
            } else {
                Ok(spectral::minkowski_subgradient(h) * *lambda)
            }
        }
        Penalty::HardFreq { .. } => Err(Error::InvalidArgument(
            "hard frequency constraint has no subgradient; use a projection".into(),
        )),
    }
}

/// Prox of the nonnegativity indicator: elementwise `max{0, v}`.
pub fn prox_nonnegative(v: &DataMatrix) -> DataMatrix {
    v.mapv(|x| x.max(0.0))
}

/// In-place variant of [`prox_nonnegative`].
pub fn clamp_nonnegative(v: &mut DataMatrix) {
    v.mapv_inplace(|x| x.max(0.0));
}

/// Prox of the hard frequency indicator: orthogonal projection onto the
/// band-limited subspace.
pub fn prox_hard_mask(v: &DataMatrix, mask: &FrequencyMask) -> Result<DataMatrix> {
    spectral::project_frequency_mask(v, mask)
}
