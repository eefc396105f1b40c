//! Error type shared by every solver in the crate.

use thiserror::Error;

use crate::problem::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("problem rejected ({} violation(s))", .0.len())]
    InvalidSpec(Vec<Violation>),

    /// A non-finite value appeared while time stepping.
    #[error("state blew up at step {step}; try dt <= {suggested_dt:e}")]
    BlowUp { step: usize, suggested_dt: f64 },

    #[error("newton iteration failed after {iterations} iterations (residual {residual:e})")]
    NewtonFailure { iterations: usize, residual: f64 },

    #[error(
        "gradient descent diverged at iteration {iteration} with stepsize {stepsize:e}; \
         cost increased 3 times in a row, use a smaller stepsize"
    )]
    Divergence { iteration: usize, stepsize: f64 },

    #[error("operation not applicable: {0}")]
    NotApplicable(String),

    #[error("fit window holds {samples} samples, need at least 3")]
    FitWindow { samples: usize },
}

impl Error {
    pub(crate) fn mismatch(context: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            found,
        }
    }
}

/// Fails with [`Error::DimensionMismatch`] unless `found == expected`.
pub(crate) fn ensure_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::mismatch(context, expected, found))
    }
}
