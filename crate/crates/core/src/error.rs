//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by panel ingestion, fitting, calibration, and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a domain precondition (negative count, bad fraction,
    /// non-finite parameter, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A CSV row could not be parsed; carries the 1-based line number.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// An operation was called on a model in the wrong state (e.g. applying
    /// an unfitted calibrator).
    #[error("state error: {0}")]
    State(String),

    /// A metric is undefined on the given input (e.g. every bin has zero
    /// interval width).
    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    /// A pipeline stage failed; wraps the underlying error with the stage name.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    /// Tag an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
