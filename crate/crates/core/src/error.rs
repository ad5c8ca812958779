use thiserror::Error;

use crate::trace::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no probabilities")]
    NoProbabilities,

    #[error("no think span")]
    NoThinkSpan,

    #[error("confidence {0} outside [0, 1]")]
    ConfidenceOutOfRange(f64),

    #[error("division by zero in fraction")]
    DivisionByZero,

    #[error("no samples")]
    NoSamples,

    #[error("bin count must be at least 1")]
    InvalidBinCount,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid trace: {}", join_violations(.0))]
    InvalidTrace(Vec<Violation>),

    #[error("token index {index} out of range for {len} tokens")]
    TokenIndexOutOfRange { index: usize, len: usize },

    #[error("target entropy {target} outside (0, ln {k})")]
    UnrealizableEntropy { target: f64, k: usize },

    #[error("invalid synthetic spec: {0}")]
    InvalidSynthSpec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
