use thiserror::Error;

/// Errors raised by the numerical core.
///
/// Non-convergence of the fixed-point iteration is *not* an error; it is
/// reported through [`crate::solver::SolveStatus`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value {value} at point {point}, component {component}")]
    NonFinite {
        point: usize,
        component: usize,
        value: f64,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("derivative order {order} exceeds cap {cap}")]
    DerivativeOrder { order: usize, cap: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("quadrature did not converge at x = {x}: residual estimate {residual:e}")]
    Quadrature { x: f64, residual: f64 },

    #[error("under-resolved: {0}")]
    UnderResolved(String),

    #[error("input not tangent to the sphere: {0}")]
    NotTangent(String),

    #[error("time grid mismatch: {0}")]
    TimeGrid(String),

    #[error("NaN encountered during {stage} at index {index}")]
    NanAbort { stage: &'static str, index: usize },

    #[error("snapshot format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
