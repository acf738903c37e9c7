use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("MCS table: {0}")]
    McsTable(String),

    #[error("power cap undefined for a stream with zero effective channel")]
    UndefinedCap,

    #[error("index out of range: {what} = {index} (limit {limit})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("at least two samples are required for a confidence interval, got {0}")]
    NoConfidenceInterval(usize),

    #[error("candidate classification needs a reference PRB (first iteration)")]
    NoReference,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
