use thiserror::Error;

/// Errors raised by the factorization toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular Gram matrix (pivot {pivot:.3e} at index {index})")]
    Singular { index: usize, pivot: f64 },

    #[error("spectrum is not conjugate-symmetric (imaginary residue {residue:.3e})")]
    NotConjugateSymmetric { residue: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("did not converge: {0}")]
    NoConvergence(String),
}

impl Error {
    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. } | Error::NonFinite(_) | Error::NoConvergence(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
