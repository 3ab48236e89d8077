use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate document id `{0}`")]
    DuplicateDocId(String),

    #[error("{kind} not found: `{name}`")]
    NotFound { kind: &'static str, name: String },

    #[error("query parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("request `{id}` is {status}, expected PENDING")]
    RequestState { id: String, status: String },

    #[error("snapshot format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("snapshot integrity check failed in section `{section}`: {detail}")]
    Integrity { section: String, detail: String },

    #[error("malformed input at line {line}: {detail}")]
    Input { line: usize, detail: String },

    #[error("generator call failed: {0}")]
    Generator(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn not_found(kind: &'static str, name: impl Into<String>) -> Self {
        Error::NotFound {
            kind,
            name: name.into(),
        }
    }
}
