use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid volume header {path}: {reason}")]
    Header { path: PathBuf, reason: String },

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("invalid orientation code {0:?}")]
    Orientation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("invalid label {value} at voxel {index}")]
    InvalidLabel { value: u8, index: usize },

    #[error("weight file: {0}")]
    WeightFormat(String),

    #[error("missing weight {0:?}")]
    MissingWeight(String),

    #[error("weight {name:?} has dims {found:?}, expected {expected:?}")]
    WeightDims {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit status for the command-line tool: 2 for bad arguments or
    /// mismatched inputs, 3 for unreadable or malformed files, 4 for weights
    /// that do not fit the network, 5 for internal invariant violations.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::InvalidArgument(_)
            | Error::GeometryMismatch(_)
            | Error::Orientation(_)
            | Error::InvalidLabel { .. } => 2,
            Error::Io { .. } | Error::Header { .. } | Error::SizeMismatch(_) => 3,
            Error::WeightFormat(_) | Error::MissingWeight(_) | Error::WeightDims { .. } => 4,
            Error::Shape(_) | Error::Stage { .. } => 5,
        }
    }

    /// The error with stage wrappers peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
