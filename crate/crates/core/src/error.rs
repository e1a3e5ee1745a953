use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed volume header {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("truncated payload {path}: expected {expected} bytes, found {found}")]
    TruncatedPayload {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("payload {path} is longer than its header promises ({found} > {expected} bytes)")]
    OversizedPayload {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("external evaluator exited: {0}")]
    EvaluatorExited(String),

    #[error("evaluator protocol violation: {0}")]
    Protocol(String),

    #[error("evaluator timed out after {0:?}")]
    Timeout(std::time::Duration),

    #[error("evaluator returned a non-finite value at position {0}")]
    NonFiniteResponse(usize),

    #[error("evaluator rejected handshake: {0}")]
    HandshakeRejected(String),

    #[error("need both positive and negative samples: {0}")]
    SingleClass(String),

    #[error("no candidate thresholds")]
    EmptyCandidates,

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

impl Error {
    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::Io { .. } => "io",
            Error::MalformedHeader { .. } => "malformed_header",
            Error::TruncatedPayload { .. } => "truncated_payload",
            Error::OversizedPayload { .. } => "oversized_payload",
            Error::NonFinite { .. } => "non_finite",
            Error::EvaluatorExited(_) => "evaluator_exited",
            Error::Protocol(_) => "protocol",
            Error::Timeout(_) => "timeout",
            Error::NonFiniteResponse(_) => "non_finite_response",
            Error::HandshakeRejected(_) => "handshake_rejected",
            Error::SingleClass(_) => "single_class",
            Error::EmptyCandidates => "empty_candidates",
            Error::Degenerate(_) => "degenerate",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
