use thiserror::Error;

/// Errors raised by the laboratory. The CLI maps `Range`, `InvalidInput`,
/// `UnsupportedDomain` and `Parse` to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),

    #[error("unsupported boundary condition: {0}")]
    UnsupportedBoundary(String),

    #[error("evaluation at singular point ({x}, {y})")]
    SingularPoint { x: f64, y: f64 },

    #[error("quadrature did not converge: {0}")]
    Accuracy(String),

    #[error("potential split failed: {0}")]
    SplitFailure(String),

    #[error("operator of size {size} exceeds the dense solver limit {limit}")]
    Capacity { size: usize, limit: usize },

    #[error("eigensolver failed: {0}")]
    Solver(String),

    #[error("out of validity range: {0}")]
    Range(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("Gaussian bound fit failed: {0}")]
    FitFailure(String),

    #[error("operator pair mismatch: {0}")]
    InvalidPair(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by the caller's input rather than by a failed
    /// numerical check.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::UnsupportedDomain(_)
                | Error::UnsupportedBoundary(_)
                | Error::SingularPoint { .. }
                | Error::Capacity { .. }
                | Error::Range(_)
                | Error::Precondition(_)
                | Error::InvalidPair(_)
                | Error::Parse(_)
        )
    }
}
