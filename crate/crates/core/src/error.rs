use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("malformed {format} data at byte {offset}: {message}")]
    Malformed {
        format: &'static str,
        offset: usize,
        message: String,
    },

    #[error("unsupported image: {0}")]
    Unsupported(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("training aborted at iteration {iteration}: {reason}")]
    TrainingAborted { iteration: u64, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Whether the failure stems from bad input rather than a fault while
    /// running (used for process exit codes).
    pub fn is_validation(&self) -> bool {
        match self {
            Error::NonFinite(_) | Error::TrainingAborted { .. } => false,
            Error::Io { source, .. } => source.kind() == io::ErrorKind::NotFound,
            _ => true,
        }
    }
}
