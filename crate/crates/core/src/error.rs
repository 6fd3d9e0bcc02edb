use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Caller broke a documented precondition (shape, ordering, range).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch { context: &'static str, expected: usize, got: usize },

    /// A triangular system has a zero pivot.
    #[error("singular triangular system: zero diagonal entry at row {row}")]
    Singular { row: usize },

    #[error("no projection with distinct values found after {attempts} attempts")]
    ProjectionFailure { attempts: usize },

    /// The exact-fit construction produced parameters that do not reproduce the labels.
    #[error(
        "exact-fit certificate failed: max residual {max_residual:e} > {tolerance:e} (min diagonal {min_diagonal:e})"
    )]
    Certificate { max_residual: f64, tolerance: f64, min_diagonal: f64 },

    #[error("training diverged at iteration {iteration}: loss {loss:e}")]
    Divergence { iteration: usize, loss: f64 },

    /// An on-manifold analysis was requested at a point with nonzero loss.
    #[error("point is not on the zero-loss set: loss {loss:e} > gate {gate:e}")]
    NotOnManifold { loss: f64, gate: f64 },

    #[error("corrector failed after {iterations} iterations: {reason} (residual {residual:e})")]
    Corrector { iterations: usize, residual: f64, reason: String },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// True for failures of the numerics themselves, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::ProjectionFailure { .. }
                | Error::Certificate { .. }
                | Error::Divergence { .. }
                | Error::Corrector { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
