use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pruning ratio {0} is outside [0, 1]")]
    RatioOutOfRange(f64),

    #[error("bandwidth fraction {0} is outside [0, 1]")]
    FractionOutOfRange(f64),

    #[error("zero uplink rate with a nonzero payload of {payload_bits} bits")]
    ZeroRate { payload_bits: f64 },

    #[error("round latency requested over an empty device list")]
    EmptyRound,

    #[error("Lagrange multiplier must be positive, got {0}")]
    NonPositiveMultiplier(f64),

    #[error("every device is infeasible under the latency threshold")]
    AllDevicesInfeasible,

    #[error("bisection bracket not found for the bandwidth multiplier")]
    BracketNotFound,

    #[error("invalid allocation instance: {0}")]
    InvalidInstance(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid model specification: {0}")]
    InvalidModel(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("IDX parse error in {path}: {reason}")]
    Idx { path: PathBuf, reason: String },

    #[error("cannot partition: {0}")]
    Partition(String),

    #[error("invalid configuration at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("malformed metrics record on line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("round {round}: {source}")]
    Round {
        round: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
