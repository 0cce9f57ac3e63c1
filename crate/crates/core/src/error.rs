use crate::event::{EventType, Violation};

/// Errors raised by the impact-model library.
#[derive(Debug, thiserror::Error)]
pub enum ImpactError {
    #[error("inconsistent book update (session {session}, seq {seq}): {reason}")]
    InvalidUpdate { session: u32, seq: u64, reason: String },

    #[error("malformed event stream: {} violation(s), first: {}", .0.len(), .0[0])]
    InvalidStream(Vec<Violation>),

    #[error("event type {0} never occurs in the sample")]
    MissingType(EventType),

    #[error("no realized gap available for price-changing type {0}")]
    MissingGap(EventType),

    #[error("lag grid mismatch: {0}")]
    GridMismatch(String),

    #[error("ell_max = {ell_max} is not below the shortest session length {shortest}")]
    SessionTooShort { ell_max: usize, shortest: usize },

    #[error("linear system is singular at pivot {pivot}")]
    Singular { pivot: usize },

    #[error("linear system is ill-conditioned (1-norm condition estimate {condition:.3e} > {limit:.3e})")]
    IllConditioned { condition: f64, limit: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: u64, reason: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ImpactError>;
