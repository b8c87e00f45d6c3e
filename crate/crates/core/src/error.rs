use std::io;

use thiserror::Error;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid sample grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("segment set is not calibrated to shot-noise units")]
    Uncalibrated,
    #[error("degenerate vacuum reference: pooled variance {0}")]
    DegenerateReference(f64),
    #[error("unsupported scenario: {0}")]
    UnsupportedScenario(String),
    #[error("injected modes are not linearly independent (residual norm {0:.3e})")]
    DependentModes(f64),
    #[error("invalid quadrature law: {0}")]
    InvalidLaw(String),
    #[error("Fock cutoff {requested} exceeds supported maximum {max}")]
    CutoffOverflow { requested: usize, max: usize },
    #[error("cutoff {cutoff} too small: truncated tail {tail:.3e} exceeds tolerance")]
    CutoffTooSmall { cutoff: usize, tail: f64 },
    #[error("kernel is not positive semidefinite: {0}")]
    NotPositiveSemidefinite(String),
    #[error("eigensolver failure: {0}")]
    Eigensolver(String),
    #[error("ill-posed reconstruction: {0}")]
    IllPosed(String),
    #[error("maximum-likelihood iteration did not converge after {0} iterations")]
    NotConverged(usize),
    #[error("invalid Wigner grid: {0}")]
    InvalidWignerGrid(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NotPositiveSemidefinite(_)
            | Error::Eigensolver(_)
            | Error::NotConverged(_)
            | Error::IllPosed(_) => ErrorKind::Numerical,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::Format(_) => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
