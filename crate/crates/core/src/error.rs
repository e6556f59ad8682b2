use thiserror::Error;

use crate::contact::NodeId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("contact graph is not connected ({components} components)")]
    Disconnected { components: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("meeting rate must be positive, got {0}")]
    NonpositiveRate(f64),
    #[error("decision matrix forwards {from}->{to} but the pair never meets")]
    SupportViolation { from: NodeId, to: NodeId },
    #[error("decision entry {from}->{to} = {value} outside [0, 1] or on the destination row")]
    InvalidDecision { from: NodeId, to: NodeId, value: f64 },
    #[error("instance too large for exhaustive search: 2^{bits} matrices")]
    InstanceTooLarge { bits: u32 },
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("node {0} out of range")]
    UnknownNode(usize),
    #[error("config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
