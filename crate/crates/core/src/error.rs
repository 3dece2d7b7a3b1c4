use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the few-shot engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {what} has norm {norm:e} (threshold {threshold:e})")]
    Degenerate {
        what: String,
        norm: f64,
        threshold: f64,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("finite-difference probe at coordinate {coordinate} produced a non-finite value")]
    FiniteDiffProbe { coordinate: usize },

    #[error("category {category} has an empty {set} set")]
    EmptyCategory { category: usize, set: &'static str },

    #[error("empty query set")]
    EmptyQuerySet,

    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("training diverged at episode {episode}: loss = {loss}")]
    Diverged { episode: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
