use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(String),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("unsupported file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Solver(uvtomo::Error),
}

impl From<uvtomo::Error> for CliError {
    fn from(e: uvtomo::Error) -> Self {
        match e {
            uvtomo::Error::Config(s) => Self::Config(s),
            uvtomo::Error::Format(s) => Self::Format(s),
            uvtomo::Error::Version { found, expected } => Self::Version { found, expected },
            uvtomo::Error::Io(io) => Self::Io(io),
            other => Self::Solver(other),
        }
    }
}

impl CliError {
    /// Process exit code; each failure class gets its own.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Solver(_) => 1,
            Self::Usage(_) => 2,
            Self::Config(_) => 3,
            Self::MissingFile(_) => 4,
            Self::Format(_) => 5,
            Self::Version { .. } => 6,
            Self::Io(_) => 7,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
