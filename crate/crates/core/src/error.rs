use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Malformed input; `row` is the 1-based line number in the source file.
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("ball of radius {radius} around the query point carries no mass")]
    EmptyBall { radius: f64 },

    #[error("not a graph: points {first} and {second} project to the same base point")]
    NotAGraph { first: usize, second: usize },

    #[error("plane at point {index} is at distance {distance} from the base plane (limit {limit})")]
    Tilt { index: usize, distance: f64, limit: f64 },

    #[error("inconsistent jet: base points {first} and {second} coincide but carry different data")]
    InconsistentJet { first: usize, second: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}
