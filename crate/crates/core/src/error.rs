use thiserror::Error;

/// Errors raised by sequence construction, transforms and operator routines.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite coefficient at index {index}")]
    NonFinite { index: usize },

    #[error("negative coefficient {value:e} at index {index}")]
    NegativeCoefficient { index: usize, value: f64 },

    #[error("total mass {mass} is not 1 within tolerance {tol:e}")]
    MassMismatch { mass: f64, tol: f64 },

    #[error("sequence has no nonzero coefficient")]
    EmptySupport,

    #[error("fit window holds {got} usable points, need at least {need}")]
    WindowTooShort { got: usize, need: usize },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("matrix is not diagonalizable to working precision (eigenvector condition {cond:e})")]
    NotDiagonalizable { cond: f64 },

    #[error("spectrum condition violated: {0}")]
    Spectrum(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("config error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> LabError {
    LabError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
