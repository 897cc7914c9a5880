use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operation only defined for the quadratic potential (kappa = 2), got kappa = {kappa}")]
    QuadraticOnly { kappa: f64 },

    #[error("imaginary residue {residue:e} exceeds {tolerance:e} in spectral assembly")]
    ImaginaryResidueTooLarge { residue: f64, tolerance: f64 },

    #[error("non-finite state at step {step}")]
    NonFiniteState { step: u64 },

    #[error("series has zero variance")]
    DegenerateSeries,

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
