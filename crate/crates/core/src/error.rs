use thiserror::Error;

/// Errors produced by the solver and its analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SbmError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate variational state: {0}")]
    DegenerateState(String),

    #[error("optimization failed: {message} (best energy {best_energy}, grad norm {best_grad_norm})")]
    OptimizationFailure {
        message: String,
        best_energy: f64,
        best_grad_norm: f64,
    },

    #[error("oracle refused: {0}")]
    OracleRefused(String),

    #[error("fit refused: {0}")]
    FitRefused(String),

    #[error("refused: {0}")]
    Refused(String),
}

pub type Result<T> = std::result::Result<T, SbmError>;
