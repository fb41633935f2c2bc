use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while loading a relation or its schema.
#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV at row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("relation has no rows")]
    EmptyRelation,
    #[error("column `{0}` has no non-null values")]
    AllNull(String),
    #[error("non-numeric value `{value}` in numeric column `{column}` at row {row}")]
    NotNumeric {
        column: String,
        row: usize,
        value: String,
    },
}

/// One problem found while validating a task against a dataset.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("invalid task: {}", list(.0))]
    Invalid(Vec<FieldError>),
    #[error("group `{0}` selects no rows under the base filter")]
    EmptyGroup(String),
    #[error("failed to parse task: {0}")]
    Parse(String),
}

fn list(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache was built for a different dataset (expected fingerprint {expected}, found {found})")]
    FingerprintMismatch { expected: String, found: String },
    #[error("cache does not cover combination {0}")]
    Miss(String),
    #[error("cache was built with m={cached}, task needs m={requested}")]
    ArityTooSmall { cached: usize, requested: usize },
    #[error("unsupported cache version {0}")]
    Version(u32),
    #[error("cache I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache format: {0}")]
    Format(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("embedding format: {0}")]
    Format(#[from] serde_json::Error),
    #[error("entry `{key}` has length {found}, expected {expected}")]
    Dimension {
        key: String,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("measure `{0}` has no prioritization heuristic for this task")]
    NoHeuristic(String),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("sample fraction must be in (0, 1], got {0}")]
    SampleFraction(f64),
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error("combination order: {0}")]
    Order(String),
}

#[derive(Debug, Error)]
pub enum SinkError {
    #[error("sink I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("sink encoding: {0}")]
    Encode(#[from] serde_json::Error),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("event log fingerprint {log} does not match oracle fingerprint {oracle}")]
    FingerprintMismatch { log: String, oracle: String },
    #[error("malformed log line {line}: {message}")]
    Log { line: usize, message: String },
    #[error("eval I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Engine(#[from] Box<crate::engine::EngineError>),
}
