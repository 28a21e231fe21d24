use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid probability mass function: {0}")]
    InvalidPmf(String),

    #[error("failed to bracket root {q} of J_{k}")]
    RootBracket { k: usize, q: usize },

    #[error("graph is disconnected: {components} components")]
    Disconnected { components: usize },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("unsupported file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] io::Error),
}
