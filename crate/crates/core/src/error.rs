use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("i/o error: {0}")]
    Stream(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("column `{column}` not found in header (available: {available})")]
    MissingColumn { column: String, available: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("degenerate class balance for symbol `{symbol}`: {positives} positives, {negatives} negatives")]
    DegenerateClass {
        symbol: char,
        positives: u64,
        negatives: u64,
    },

    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),

    #[error("determinization did not converge: {0}")]
    NonConvergent(String),

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("internal consistency check failed: {0}")]
    Internal(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
