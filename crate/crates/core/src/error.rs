use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid probability literal {literal:?}: {reason}")]
    BadProbability { literal: String, reason: String },

    #[error("p must lie in (0, 1/2], got {0}")]
    ProbabilityOutOfRange(String),

    #[error("exact (rational) channel cannot be sampled; use the exact dynamic program instead")]
    SamplingExactChannel,

    #[error("rational arithmetic requires a rational p; channel was built from a decimal literal")]
    NotRational,

    #[error("state {0} has no unique leading message; use the tie-case analysis")]
    TiedLeader(String),

    #[error("strategy table has no entry for reachable state {0}")]
    MissingTableEntry(String),

    #[error("invalid strategy table: {0}")]
    BadTable(String),

    #[error("resource cap exceeded: {what} needs {needed}, cap is {cap}")]
    ResourceCap { what: &'static str, needed: usize, cap: usize },

    #[error("tentacle depth {depth} is too shallow for horizon {n} (need at least {need})")]
    DepthTooShallow { depth: usize, n: usize, need: usize },

    #[error("n = {0} is not divisible by 3")]
    NotDivisibleBy3(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical check failed: {0}")]
    CheckFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
