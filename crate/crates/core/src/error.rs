use thiserror::Error;

/// Errors produced by the library. Data-quality findings (assumption
/// violations, non-converging cells) are reported as values, not errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("empty node set")]
    EmptySet,

    #[error("graph carries no partition tags")]
    Untagged,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dangling edge endpoint {node} (n = {n})")]
    DanglingEdge { node: usize, n: usize },

    #[error("singular linear system")]
    Singular,

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
