use thiserror::Error;

use crate::dp::ConditionReport;

pub type Result<T, E = NtkError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NtkError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not PSD: eigenvalue {eigenvalue:e} below -{tol:e}")]
    NotPsd { eigenvalue: f64, tol: f64 },

    #[error("matrix is not positive definite (Cholesky pivot failed)")]
    NotPositiveDefinite,

    #[error("truncated Laplace needs delta > 0; plain Laplace noise is not offered")]
    UnboundedSupport,

    #[error("privacy budget infeasible: {0}")]
    BudgetInfeasible(Box<ConditionReport>),
}

impl NtkError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        NtkError::InvalidInput(msg.into())
    }
}
