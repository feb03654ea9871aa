use thiserror::Error;

use crate::Capability;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("provider does not support {0}")]
    Unsupported(Capability),
    #[error("no face found in image {index}")]
    NoFace { index: usize },
    #[error("artifact not found: {0}")]
    NotFound(String),
    #[error("embedding has dimension {actual}, provider declares {expected}")]
    EmbeddingDim { expected: usize, actual: usize },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("server error {status}: {message}")]
    Server { status: u16, message: String },
    #[error("invalid provider configuration: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl GatewayError {
    /// Worth retrying: the request may succeed unchanged.
    pub fn is_transient(&self) -> bool {
        matches!(self, GatewayError::Transport { .. })
            || matches!(self, GatewayError::Server { status, .. } if *status >= 500)
    }
}
