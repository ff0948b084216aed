use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("decode error: {0}")]
    Decode(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("edge fit error: {0}")]
    EdgeFit(String),

    #[error("degenerate edge: {0}")]
    DegenerateEdge(String),

    #[error("normalization error: {0}")]
    Normalization(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("malformed {what}: {message}")]
    Format { what: String, message: String },

    /// An error raised inside a named pipeline stage.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }

    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Decode(_) => "DecodeError",
            Error::Domain(_) => "DomainError",
            Error::Io { .. } => "IoError",
            Error::EdgeFit(_) => "EdgeFitError",
            Error::DegenerateEdge(_) => "DegenerateEdgeError",
            Error::Normalization(_) => "NormalizationError",
            Error::EmptyInput(_) => "EmptyInputError",
            Error::Format { .. } => "FormatError",
            Error::Stage { source, .. } => source.kind(),
        }
    }

    pub fn stage(&self) -> Option<&str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    /// Process exit code: 3 for data errors, 4 for I/O errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 4,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
