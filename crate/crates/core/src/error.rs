use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("point is at infinity for this transformation (condition number {0:.3e})")]
    BoundaryAtInfinity(f64),

    #[error("phase unwrap failed after {depth} subdivisions (increment {increment:.3})")]
    Unwrap { depth: u32, increment: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("ill-conditioned: {0}")]
    Conditioning(String),

    #[error("invalid strip: {0}")]
    InvalidStrip(String),

    #[error("ambiguous reconstruction: {0}")]
    Ambiguity(String),

    #[error("precondition rejected: {0}")]
    Rejected(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("input: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Input(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Input(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Input(e.to_string())
    }
}
