use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum DrtrError {
    #[error("malformed input: {0}")]
    MalformedInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("edge ({0}, {1}) already exists")]
    DuplicateEdge(usize, usize),

    #[error("shell entry missing: node {v} hop {k} neighbor {u}")]
    MissingEntry { v: usize, k: usize, u: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl DrtrError {
    /// True for failures caused by the caller's input rather than by arithmetic.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, DrtrError::Numeric(_))
    }
}

pub type Result<T> = std::result::Result<T, DrtrError>;
