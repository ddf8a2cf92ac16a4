use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed row at line {line}: {message}")]
    MalformedRow { line: usize, message: String },
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("duplicate record for (context={context_id}, text={text_id})")]
    DuplicateRecord { context_id: String, text_id: String },
    #[error("positive log-probability {value} at line {line} (limit is +1e-6)")]
    PositiveLogProb { line: usize, value: f64 },
    #[error("missing record for (context={context_id}, text={text_id})")]
    MissingRecord { context_id: String, text_id: String },
    #[error("invalid task {task_id}: {message}")]
    InvalidTask { task_id: String, message: String },
    #[error("empty token sequence")]
    EmptySequence,
    #[error("non-finite value encountered: {0}")]
    NonFiniteInput(String),
    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("beta must be finite and >= 0, got {0}")]
    InvalidBeta(f64),
    #[error("PMI exponent k must be >= 1, got {0}")]
    InvalidExponent(f64),
    #[error("context list is empty")]
    EmptyContexts,
    #[error("bank has no null contexts")]
    NoNullContexts,
    #[error("no prior entry for text {0}")]
    MissingPrior(String),
    #[error("invalid k={k} for task {task_id} with {n_candidates} candidates")]
    InvalidK {
        k: usize,
        task_id: String,
        n_candidates: usize,
    },
    #[error("task {task_id} has direction {found}, expected {expected}")]
    WrongDirection {
        task_id: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("grid step must satisfy 0 < step <= 0.5, got {0}")]
    InvalidStep(f64),
    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),
    #[error("cannot draw {captions} distinct captions from {available} sequences")]
    TooManyCaptions { captions: usize, available: u128 },
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("malformed prior table: {0}")]
    MalformedPrior(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn missing(context_id: &str, text_id: &str) -> Self {
        Error::MissingRecord {
            context_id: context_id.to_owned(),
            text_id: text_id.to_owned(),
        }
    }

    /// True for failures caused by non-finite arithmetic rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFiniteInput(_))
    }
}
