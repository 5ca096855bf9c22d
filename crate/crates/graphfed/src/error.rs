//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A CSV row could not be parsed into the expected shape.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    /// An edge or partition row references a node id that does not exist.
    #[error("unknown node id `{id}` at line {line}")]
    UnknownNode { id: String, line: u64 },

    /// A named argument violated its documented constraint.
    #[error("invalid value for `{name}`: {msg}")]
    InvalidParameter { name: &'static str, msg: String },

    /// A client ended up with no nodes.
    #[error("client {client} has no nodes")]
    EmptyClient { client: usize },

    /// Matrix or vector shapes do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Iterative solver failed to reach tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// The one-hot assignment matrix does not distribute nodes equally.
    #[error("unbalanced assignment: {0}")]
    UnbalancedAssignment(String),

    /// A federated round did not receive every client's message.
    #[error("round {round}: missing message from client {client}")]
    MissingClientMessage { round: usize, client: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(name: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            msg: msg.into(),
        }
    }
}
