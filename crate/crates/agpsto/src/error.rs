use thiserror::Error;

/// Errors raised by planning, conditioning, and scenario loading.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// Numerical failure; carries a condition-number estimate when one is
    /// available (e.g. a singular innovation matrix during conditioning).
    #[error("numerical failure: {what}{}", cond.map(|c| format!(" (cond ~ {c:.3e})")).unwrap_or_default())]
    Numerical { what: String, cond: Option<f64> },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn numerical(msg: impl Into<String>, cond: Option<f64>) -> Self {
        Error::Numerical {
            what: msg.into(),
            cond,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
