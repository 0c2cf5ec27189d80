use thiserror::Error;

use crate::model::Family;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("step {index}: {field} field is not a member of family {family}")]
    FamilyViolation {
        index: usize,
        field: &'static str,
        family: Family,
    },

    #[error("step {index}: negative duration {duration}")]
    NegativeDuration { index: usize, duration: f64 },

    #[error("non-finite input")]
    NonFiniteInput,

    #[error("non-finite integrator state at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("matrix exponential overflowed")]
    Overflow,

    #[error("matrix is not of the form I + λE_ij with i != j")]
    NotElementary,

    #[error("sign diagonal has {count} entries equal to -1 (determinant -1)")]
    OddNegativeCount { count: usize },

    #[error("matrix is not diagonal with entries ±1")]
    NotSignDiagonal,

    #[error("matrix is singular (det = {det:e})")]
    SingularMatrix { det: f64 },

    #[error("matrix has negative determinant {det}")]
    NegativeDeterminant { det: f64 },

    #[error("slope {alpha} is out of range")]
    AlphaOutOfRange { alpha: f64 },

    #[error("dimension {dim} is too small: {reason}")]
    DimensionTooSmall { dim: usize, reason: &'static str },

    #[error("condition violated: {0}")]
    ConditionViolated(String),

    #[error("time {t} outside [0, {tau}]")]
    TimeOutOfRange { t: f64, tau: f64 },

    #[error("budget exceeded at n = {n}; best achieved error {best_error:e}")]
    BudgetExceeded { n: usize, best_error: f64 },

    #[error("coefficient {index} is negative ({value})")]
    NegativeCoefficient { index: usize, value: f64 },

    #[error("rescale factor {lambda} must exceed {bound}")]
    LambdaTooSmall { lambda: f64, bound: f64 },

    #[error("derivative {derivative:e} is numerically zero")]
    ZeroDerivative { derivative: f64 },

    #[error("finite-difference stencil produced non-finite values")]
    SingularStencil,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    pub(crate) fn parse_field(field: impl Into<String>, message: impl std::fmt::Display) -> Self {
        Error::Parse {
            line: 0,
            column: 0,
            message: format!("field `{}`: {message}", field.into()),
        }
    }
}
