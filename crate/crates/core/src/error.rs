use thiserror::Error;

/// Errors raised by mesh construction, assembly, solves and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh configuration: {0}")]
    InvalidMesh(String),

    #[error("element {element} straddles the wall-layer interface at x3 = {plane}")]
    StraddlingElement { element: usize, plane: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("wall-law inversion did not converge for speed {speed} (alpha = {alpha}) after {iterations} iterations")]
    InversionFailed { speed: f64, alpha: f64, iterations: usize },

    #[error("linear system is singular or could not be factorized: {0}")]
    SingularSystem(String),

    #[error("eigenvalue computation failed: {0}")]
    Eigen(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{path}: {reason}")]
    Config { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
