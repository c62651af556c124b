use thiserror::Error;

/// Errors raised by the library.
///
/// Validation failures of a well-formed spec are *not* errors; they are
/// reported through [`crate::model::ValidationReport`]. The variants here
/// cover malformed input and numerical failure.
#[derive(Debug, Error)]
pub enum AjdError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("state outside the canonical state space: {0}")]
    OutsideStateSpace(String),

    #[error("model is not admissible: {0}")]
    NotAdmissible(String),

    #[error("matrix is numerically indefinite (min eigenvalue {min_eigenvalue:.3e})")]
    Indefinite { min_eigenvalue: f64 },

    #[error("jump transform diverges: {0}")]
    TransformDomain(String),

    #[error("matrix is not stable (max real eigenvalue {0:.3e})")]
    Unstable(f64),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("Riccati integration left the solvable domain at t = {time}: {reason}")]
    RiccatiDomain { time: f64, reason: String },

    #[error("dominating jump rate violated after {retries} retries at t = {time}")]
    Thinning { time: f64, retries: u32 },

    #[error("classification gate: {0}")]
    Gate(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl AjdError {
    /// True for errors caused by bad model input rather than numerics or I/O.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            AjdError::Dimension(_)
                | AjdError::InvalidArgument(_)
                | AjdError::OutsideStateSpace(_)
                | AjdError::NotAdmissible(_)
                | AjdError::Parse(_)
        )
    }
}

impl From<serde_json::Error> for AjdError {
    fn from(e: serde_json::Error) -> Self {
        AjdError::Parse(e.to_string())
    }
}

impl From<csv::Error> for AjdError {
    fn from(e: csv::Error) -> Self {
        AjdError::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, AjdError>;
