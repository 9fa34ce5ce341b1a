//! Common error type for the whole crate.

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty feature space")]
    EmptyFeatureSpace,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Malformed line in a text artifact (dataset, vocabulary, dictionary,
    /// labels file). `line` is 1-based.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("malformed manifest XML at byte {offset}: {msg}")]
    ManifestXml { offset: u64, msg: String },

    #[error("invalid feature token {0:?}")]
    InvalidToken(String),

    #[error("degenerate labels: both classes must be present")]
    DegenerateLabels,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("model file error: {0}")]
    ModelFormat(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    ModelVersion { found: u32, expected: u32 },

    #[error("infeasible corpus calibration: {0}")]
    InfeasibleCorpus(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl AsRef<Path>) -> impl FnOnce(io::Error) -> Error {
        let path = path.as_ref().to_path_buf();
        move |source| Error::Io { path, source }
    }

    /// Short machine-readable kind, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyFeatureSpace => "empty-feature-space",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::Parse { .. } => "parse",
            Error::ManifestXml { .. } => "manifest-xml",
            Error::InvalidToken(_) => "invalid-token",
            Error::DegenerateLabels => "degenerate-labels",
            Error::InvalidConfig(_) => "invalid-config",
            Error::InvalidInput(_) => "invalid-input",
            Error::ModelFormat(_) => "model-format",
            Error::ModelVersion { .. } => "model-version",
            Error::InfeasibleCorpus(_) => "infeasible-corpus",
            Error::Io { source, .. } => {
                if source.kind() == io::ErrorKind::NotFound {
                    "missing-file"
                } else {
                    "io"
                }
            }
        }
    }

    /// Process exit code for the CLI. Clap reserves 2 for usage errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => 3,
            Error::DimensionMismatch { .. } => 4,
            Error::Parse { .. }
            | Error::ManifestXml { .. }
            | Error::InvalidToken(_)
            | Error::ModelFormat(_)
            | Error::ModelVersion { .. } => 5,
            Error::DegenerateLabels
            | Error::InvalidConfig(_)
            | Error::InvalidInput(_)
            | Error::EmptyFeatureSpace
            | Error::InfeasibleCorpus(_) => 6,
            Error::Io { .. } => 7,
        }
    }
}
