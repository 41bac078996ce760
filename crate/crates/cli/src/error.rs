use std::path::PathBuf;

use infoplay_core::{MatInfoError, NcError};
use infoplay_train::TrainError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}", match line { Some(l) => format!("parse error at line {l}: {message}"), None => format!("parse error: {message}") })]
    ParseError { line: Option<usize>, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("value of `{key}` out of range: {reason}")]
    RangeError { key: String, reason: String },
    #[error("missing `cmd` field")]
    MissingCommand,
    #[error("unknown command `{0}`")]
    UnknownCommand(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("not an embedding file (bad magic)")]
    BadMagic,
    #[error("unsupported embedding file version {0}")]
    UnsupportedVersion(u16),
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("csv shape error at line {line}: {reason}")]
    CsvShapeError { line: usize, reason: String },
    #[error(transparent)]
    Matrix(#[from] MatInfoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("nothing to plot: {0}")]
    EmptySeries(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("malformed metrics csv at line {line}: {reason}")]
    BadCsv { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Top-level failure of a subcommand, mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Nc(#[from] NcError),
    #[error(transparent)]
    MatInfo(#[from] MatInfoError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Runtime(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Invariant(_) => 3,
            _ => 2,
        }
    }
}
