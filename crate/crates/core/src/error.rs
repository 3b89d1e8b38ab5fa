use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("edge list contains no edges")]
    EmptyGraph,

    #[error("timestamp {0} absent from graph")]
    TimestampAbsent(f64),

    #[error("node index {index} out of range (vocabulary size {size})")]
    NodeOutOfRange { index: usize, size: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),

    #[error("non-positive time gap {0}")]
    NonPositiveGap(f64),

    #[error("walk timestamps are not strictly increasing at position {0}")]
    NonIncreasingWalk(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that stem from diverging arithmetic rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}
