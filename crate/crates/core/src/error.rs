use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: duplicate rating for user {user}, item {item}")]
    DuplicateEntry { line: usize, user: u64, item: u64 },

    #[error("no ratings found in input")]
    EmptyData,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{trainer} diverged at epoch {epoch}: training loss is {value}")]
    Diverged { trainer: String, epoch: usize, value: f64 },

    #[error("index ({user}, {item}) out of bounds for {m}x{n} model")]
    IndexOutOfBounds {
        user: usize,
        item: usize,
        m: usize,
        n: usize,
    },

    #[error("{0} is empty")]
    EmptySet(&'static str),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("report: {0}")]
    Report(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the `sma` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidArgument(_) => 2,
            Error::Parse { .. }
            | Error::DuplicateEntry { .. }
            | Error::EmptyData
            | Error::EmptySet(_)
            | Error::ModelFormat(_)
            | Error::IndexOutOfBounds { .. } => 3,
            Error::Diverged { .. } => 4,
            Error::Io { .. } | Error::Report(_) => 1,
        }
    }
}
