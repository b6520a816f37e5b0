use thiserror::Error;

/// Errors raised by oracles, solvers and the experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {component}[{index}]")]
    NonFinite { component: &'static str, index: usize },

    #[error("conjugate gradient did not converge in {iters} iterations (relative residual {residual:.3e})")]
    CgNotConverged { iters: usize, residual: f64 },

    #[error("inner solve did not converge in {iters} iterations (gradient norm {grad_norm:.3e})")]
    InnerSolve { iters: usize, grad_norm: f64 },

    #[error("gradient check failed on {failures} map(s)")]
    GradCheck { failures: usize },

    #[error("operation `{0}` is not available for this problem")]
    Unsupported(&'static str),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical machinery (CG, inner solves, non-finite values).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::CgNotConverged { .. }
                | Error::InnerSolve { .. }
                | Error::GradCheck { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
