use thiserror::Error;

use crate::expr::{EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("evaluation failed at {point}: {reason}")]
    Evaluation { point: String, reason: String },

    #[error("unsupported algebra: {0}")]
    UnsupportedAlgebra(String),

    #[error("problem has no symmetry declared")]
    MissingSymmetry,

    #[error("unsupported bundle shape: {0}")]
    UnsupportedBundle(String),

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("regularity failure: control Hessian smallest singular value {sigma_min:e}")]
    Regularity { sigma_min: f64 },

    #[error("branch switch in optimal feedback: {0}")]
    BranchSwitch(String),

    #[error("feedback failed at t = {time}: {source}")]
    FeedbackAt {
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Expr(#[from] EvalError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Evaluation { .. }
            | Error::NoConvergence { .. }
            | Error::Regularity { .. }
            | Error::BranchSwitch(_)
            | Error::Expr(_) => true,
            Error::FeedbackAt { .. } => true,
            _ => false,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension {
            context,
            expected,
            got,
        });
    }
    Ok(())
}
