use thiserror::Error;

/// Errors raised by the solver and its harness.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("reference point ({0}, {1}) lies outside the unit square")]
    Domain(f64, f64),

    #[error("configuration error for `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("inverted element {cell}: det J = {det_j:e}")]
    InvertedElement { cell: usize, det_j: f64 },

    #[error("invalid thermodynamic state: {0}")]
    State(String),

    #[error("mesh tangled at step {step} (t = {time:e}): cell {cell} has det J = {det_j:e}")]
    Tangled { step: usize, time: f64, cell: usize, det_j: f64 },

    #[error("non-finite value detected at step {step} (t = {time:e}) in {field}")]
    NonFinite { step: usize, time: f64, field: &'static str },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SolverError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        SolverError::Config { key: key.into(), message: message.into() }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            SolverError::Tangled { .. } | SolverError::InvertedElement { .. } => 2,
            SolverError::NonFinite { .. } => 3,
            SolverError::Config { .. } | SolverError::Usage(_) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, SolverError>;
