use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate ground state: lowest gap {gap:e} below {tolerance:e}")]
    DegenerateGroundState { gap: f64, tolerance: f64 },

    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("need at least 2 runs for pairwise distances, got {0}")]
    InsufficientRuns(usize),

    #[error("every run was excluded from the order parameter")]
    EmptyAfterExclusion,

    #[error("transition {0} is not bracketed by the duration grid")]
    NotBracketed(&'static str),

    #[error("component structure persists at every inverse temperature")]
    NoCollapse,

    #[error("component tracking lost at T = {duration}: {reason}")]
    TrackingLost { duration: f64, reason: String },

    #[error("malformed input {path}: {reason}")]
    Parse { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parse(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
