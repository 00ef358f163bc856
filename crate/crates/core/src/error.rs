use thiserror::Error;

use crate::qtfit::QtRepresentation;

pub type Result<T> = std::result::Result<T, QtError>;

#[derive(Debug, Error)]
pub enum QtError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("brute-force contraction capped at N = {max}, got N = {n}; use main_term_closed")]
    SizeCap { n: usize, max: usize },

    #[error("reducible chain: generator kernel has dimension {kernel_dim}")]
    ReducibleChain { kernel_dim: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("gradient form unavailable: {0}")]
    GradientFormUnavailable(String),

    #[error("QT fit did not converge: best residual {best_residual:.3e}")]
    NonConvergence {
        best_residual: f64,
        best: Box<QtRepresentation>,
    },

    #[error("integration diverged at step {step}")]
    Divergence { step: usize },

    #[error("monotonicity witness inconclusive: final distance to stationary state {distance:.3e}")]
    Inconclusive { distance: f64 },
}

pub(crate) fn invalid(msg: impl Into<String>) -> QtError {
    QtError::InvalidInput(msg.into())
}

pub(crate) fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(invalid(format!("{what} contains non-finite entries")))
    }
}
