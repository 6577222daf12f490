use thiserror::Error;

#[derive(Debug, Error)]
pub enum DipoleError {
    /// An argument is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("graph is disconnected ({components} components); enable auto-connect to bridge them")]
    Disconnected { components: usize },

    /// An iterative solver failed to reach its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A matching no longer agrees with the diagrams it was computed for.
    #[error("inconsistent state: {0}")]
    Consistency(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid data: {0}")]
    Validation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DipoleError> = std::result::Result<T, E>;

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(DipoleError::Parameter(msg.into()))
}
