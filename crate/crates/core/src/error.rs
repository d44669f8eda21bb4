use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown node index {0}")]
    UnknownNode(usize),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("graph contains a directed cycle")]
    Cycle,
    #[error("node sets must be pairwise disjoint")]
    OverlappingSets,
    #[error("invalid conditional probability table for node {node}: {reason}")]
    InvalidCpt { node: usize, reason: String },
    #[error("state {state} is out of range for node {node}")]
    InvalidState { node: usize, state: usize },
    #[error("conditioning event has probability zero")]
    Unconditionable,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("exact enumeration over {0} binary features exceeds the limit of {1}")]
    TooManyFeatures(usize, usize),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl Error {
    /// Errors caused by bad user input, as opposed to environment failures.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::ThreadPool(_))
    }
}
