use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("backward already run on this graph; record a new forward pass first")]
    BackwardTwice,

    #[error("non-finite value detected: {0}")]
    NonFinite(String),

    #[error("invalid action {action} for agent {agent} (action count {num_actions})")]
    InvalidAction {
        agent: usize,
        action: usize,
        num_actions: usize,
    },

    #[error("step called on a finished episode")]
    StepAfterTerminal,

    #[error("wrong number of actions: expected {expected}, got {got}")]
    JointActionArity { expected: usize, got: usize },

    #[error("replay buffer holds {have} episodes, need {need}")]
    BufferTooSmall { have: usize, need: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
