use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Pipeline stage at which a manuscript was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Names,
    Text,
    Segment,
    Chunk,
    References,
    Disambiguation,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Names => "names",
            Stage::Text => "text",
            Stage::Segment => "segment",
            Stage::Chunk => "chunk",
            Stage::References => "references",
            Stage::Disambiguation => "disambiguation",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Failures reported by the sidecar embedding client.
#[derive(Debug, Error)]
pub enum SidecarError {
    /// The peer could not be reached or the connection broke.
    #[error("sidecar transport failure: {0}")]
    Transport(#[source] io::Error),
    /// The peer answered with an error record.
    #[error("sidecar encoder failure for request {request_id}: {message}")]
    Encoder { request_id: String, message: String },
    /// The peer sent something that does not follow the wire format.
    #[error("sidecar protocol violation: {0}")]
    Protocol(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// A manuscript could not be processed and must be dropped.
    #[error("fail-fast at stage {stage}: {reason}")]
    FailFast { stage: Stage, reason: String },

    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("malformed {what}: {message}")]
    Format { what: String, message: String },

    /// The input does not yield a usable dataset.
    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Sidecar(#[from] SidecarError),
}

impl Error {
    pub fn fail_fast(stage: Stage, reason: impl Into<String>) -> Self {
        Error::FailFast {
            stage,
            reason: reason.into(),
        }
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn format(what: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            what: what.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
