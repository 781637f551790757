use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate ray profile: all weights are zero")]
    DegenerateProfile,

    #[error("topology error at vertex {vertex}: {reason}")]
    Topology { vertex: usize, reason: String },

    #[error("optimization diverged at epoch {epoch} (vertex {vertex})")]
    Divergence { epoch: usize, vertex: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Non-finite or otherwise unusable sampled data.
    #[error("data error: {0}")]
    Data(String),

    #[error("format error at offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("resource error: {0}")]
    Resource(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
