use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An orbit asked for more exact bits than the phase still carries.
    #[error("phase precision exhausted: need {needed} bits, {available} available")]
    PrecisionExhausted { needed: usize, available: usize },

    /// A caller violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Config file problem: unknown key, bad value, missing field.
    #[error("config error: {0}")]
    Config(String),

    /// The requested energy is an eigenvalue of the truncation in play.
    #[error("singular energy: {0}")]
    SingularEnergy(String),

    /// An avalanche-principle precondition failed; the message names the
    /// condition and the offending block index.
    #[error("avalanche precondition violated: {0}")]
    AvalanchePrecondition(String),

    /// Iterative eigensolver did not reach the requested residual.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// A run would exceed the configured cost budget.
    #[error("run refused: {0}")]
    Refused(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
