use thiserror::Error;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("assembly failed at triangle {triangle}: {reason}")]
    Assembly { triangle: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("matrix is not positive definite: pivot {pivot} has value {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("numerical failure for theta {theta}: {reason}")]
    Numerical { theta: String, reason: String },

    #[error("{what}: {} location(s) outside the domain, indices {indices:?}", indices.len())]
    OutOfDomain { what: String, indices: Vec<usize> },

    #[error("pseudo-observation placement failed: {0}")]
    Placement(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("hyperparameter mode search did not converge after {iterations} sweeps (last step {last_step:e})")]
    ModeSearch {
        iterations: usize,
        last_step: f64,
        trace: Vec<Vec<f64>>,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => ErrorClass::Config,
            Error::NotPositiveDefinite { .. }
            | Error::Numerical { .. }
            | Error::ModeSearch { .. }
            | Error::Assembly { .. } => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
