use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("device busy: {0}")]
    Busy(String),
    #[error("schema error on topic `{topic}`: expected {expected}, got {got}")]
    Schema {
        topic: String,
        expected: String,
        got: String,
    },
    #[error("unknown topic `{0}`")]
    UnknownTopic(String),
    #[error("no path from start to goal")]
    NoPath,
    #[error("no goal: {0}")]
    NoGoal(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
