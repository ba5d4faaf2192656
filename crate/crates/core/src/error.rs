use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("curve `{curve}` evaluated to an invalid value {value} at r = {r}")]
    Evaluation { curve: String, r: f64, value: f64 },

    #[error("cannot bracket y = {y} for curve `{curve}` (last upper end {upper}, value {value})")]
    BracketFailure {
        curve: String,
        y: f64,
        upper: f64,
        value: f64,
    },

    #[error("curve `{curve}` is not monotone near r = {r}")]
    NonMonotone { curve: String, r: f64 },

    #[error("curve `{curve}` has class {found}, expected {expected}")]
    ClassMismatch {
        curve: String,
        expected: String,
        found: String,
    },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("perturbation function `{which}` has invalid value {value} at t = {t}")]
    NonPositiveRate { which: &'static str, t: f64, value: f64 },

    #[error("adaptive step {step:e} fell below {floor:e} at t = {t}")]
    StepUnderflow { t: f64, step: f64, floor: f64 },

    #[error("dimension mismatch for {what}: expected {expected}, got {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("linear solve failed: {0}")]
    SingularSolve(String),

    #[error("inequality `{name}` violated at r = {r} (margin {margin:e})")]
    InequalityViolation { name: String, r: f64, margin: f64 },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
