use thiserror::Error;

/// Failure modes shared by every estimator in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("incompatible grids: {0}")]
    IncompatibleGrids(String),

    #[error("degenerate observation: residual {index} has norm {norm:e}")]
    DegenerateObservation { index: usize, norm: f64 },

    #[error("operator is not self-adjoint (max asymmetry {0:e})")]
    NotSelfAdjoint(f64),

    #[error("ambiguous sign alignment: |<est, reference>| = {0:e}")]
    AmbiguousAlignment(f64),

    #[error("eigenvalue {index} is not simple (relative gap {gap:e})")]
    DegenerateEigenvalue { index: usize, gap: f64 },

    #[error("insufficient rank: requested {requested} components, only {available} positive eigenvalues")]
    InsufficientRank { requested: usize, available: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NumericalFailure(_)
                | Error::DegenerateObservation { .. }
                | Error::DegenerateEigenvalue { .. }
                | Error::InsufficientRank { .. }
                | Error::NotSelfAdjoint(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
