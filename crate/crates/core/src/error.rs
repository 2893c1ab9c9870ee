use alloc::string::String;

/// Errors produced by the allocation, bound, and simulation routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("layer weights u and w are both zero")]
    DegenerateWeights,

    #[error("power ceiling is unbounded (u = 0 with beta > alpha)")]
    UnboundedCeiling,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("fading distribution has no states with nonzero expected gain")]
    EmptyFading,

    #[error("{layers} layers exceeds the brute-force limit of {max}")]
    TooManyLayers { layers: usize, max: usize },

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("distortion vector needs {required} power but only {available} is available (deficit {deficit})")]
    PowerDeficit { required: f64, available: f64, deficit: f64 },

    #[error("infeasible: constraint `{constraint}` violated by {violation}")]
    Infeasible { constraint: String, violation: f64 },

    #[error("boundary not found: {0}")]
    BoundaryNotFound(String),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}

/// Rejects NaN, infinities, and values `<= 0`.
pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, alloc::format!("must be finite and > 0, got {value}")))
    }
}

pub(crate) fn require_nonnegative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(invalid(name, alloc::format!("must be finite and >= 0, got {value}")))
    }
}
