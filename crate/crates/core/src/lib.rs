//! Supervised semi-nonnegative matrix factorization (SSNMF) for spatio-temporal
//! forecasting.
//!
//! A data tensor `X` (space × time) and auxiliary tensors `Y` are factorized as
//! `X ≈ W H`, `Y ≈ W' H` with a shared nonnegative temporal code `H`. The code
//! can be regularized in the time domain (ridge, lasso) or in the frequency
//! domain, either softly through the Minkowski 1-norm of its DFT or through a
//! hard constraint on which DFT coefficients it may use. The learned auxiliary
//! dictionary `W'` then encodes the full auxiliary record, and `W` maps the
//! resulting code back onto the data over the missing period.
//!
//! Module map:
//!
//! * [`tensor`]: tensor/matrix data model, matricization, stacking.
//! * [`spectral`]: row-wise DFT (1/T forward scaling), Minkowski norm and its
//!   subgradient, frequency masks, inverse usage ratio.
//! * [`regularization`]: penalty values, subgradients and proximal maps.
//! * [`solvers`]: H/W subproblem solvers, block coordinate descent, three
//!   operator splitting, alternating projected gradient descent.
//! * [`forecast`]: encoding, prediction, NSE and the atom-removal scan.
//! * [`synthetic`]: seeded generators and closed-form oracles.

pub mod error;
pub mod forecast;
pub mod linalg;
pub mod regularization;
pub mod rng;
pub mod solvers;
pub mod spectral;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, Result};
pub use regularization::{MaskSource, Penalty};
pub use solvers::{FactorModel, Hyper, SolveReport, StepSchedule, Termination};
pub use spectral::{ComplexSpectrum, FrequencyMask};
pub use tensor::{DataMatrix, SpatioTemporalTensor};
