use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unknown topic `{0}`")]
    UnknownTopic(String),
    #[error("topic `{0}` is not a command topic")]
    NotCommand(String),
    #[error("scenario parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("log version mismatch: expected {expected}, found {found}")]
    Version { expected: String, found: String },
    #[error("cannot bind port {port}: {source}")]
    Bind {
        port: u16,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] marvin_core::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GatewayError {
    /// Exit code for the CLI: 2 for usage and parse problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            GatewayError::Parse { .. } | GatewayError::Version { .. } | GatewayError::Schema(_) => 2,
            GatewayError::Core(marvin_core::Error::Parse { .. }) => 2,
            _ => 1,
        }
    }
}
