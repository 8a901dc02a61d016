use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid placement: {0}")]
    InvalidPlacement(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("action {action} is not allowed: {reason}")]
    InvalidAction { action: usize, reason: String },

    #[error("episode already finished")]
    EpisodeFinished,

    #[error("cannot search from a terminal state")]
    TerminalRoot,

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("target generation stalled after {attempts} attempts ({found} of {requested} found)")]
    GenerationStalled {
        attempts: u64,
        found: usize,
        requested: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
