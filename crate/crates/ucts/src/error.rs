use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped by how the CLI reports them: configuration problems
/// exit with code 1, data/model problems with code 2, internal bugs with 3.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameter or configuration supplied by the caller.
    #[error("config: {0}")]
    Config(String),

    /// Invalid dataset contents (schema violations, bad values, coverage).
    #[error("data: {0}")]
    Data(String),

    /// Malformed or corrupted model file.
    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    /// Invariant violation that indicates a bug rather than bad input.
    #[error("internal: {0}")]
    Internal(String),
}

impl Error {
    /// Process exit code for the CLI: 1 usage, 2 data, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Data(_) | Error::ModelFormat(_) | Error::Io(_) | Error::Csv(_) => 2,
            Error::Internal(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
