use std::fmt;
use std::path::Path;

use claim_endorse::engine::EngineError;
use claim_endorse::error::{CacheError, DatasetError, EmbeddingError, EvalError, FieldError, PlanError, SinkError, TaskError};
use serde_json::json;

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// A failure classified by exit code, rendered as one JSON object on stderr.
#[derive(Debug)]
pub struct CliError {
    pub io: bool,
    pub kind: &'static str,
    pub message: String,
    pub fields: Vec<FieldError>,
    /// The reader of our output went away; not reported.
    pub closed_pipe: bool,
}

impl CliError {
    pub fn validation(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            io: false,
            kind,
            message: message.into(),
            fields: Vec::new(),
            closed_pipe: false,
        }
    }

    pub fn io(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            io: true,
            kind,
            message: message.into(),
            fields: Vec::new(),
            closed_pipe: false,
        }
    }

    pub fn file(path: &Path, source: std::io::Error) -> Self {
        let closed_pipe = source.kind() == std::io::ErrorKind::BrokenPipe;
        Self {
            closed_pipe,
            ..Self::io("io", format!("{}: {source}", path.display()))
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.io {
            EXIT_IO
        } else {
            EXIT_VALIDATION
        }
    }

    pub fn to_json(&self) -> String {
        json!({
            "error": if self.io { "io" } else { "validation" },
            "kind": self.kind,
            "message": self.message,
            "fields": self.fields,
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } => Self::io("dataset", e.to_string()),
            _ => Self::validation("dataset", e.to_string()),
        }
    }
}

impl From<TaskError> for CliError {
    fn from(e: TaskError) -> Self {
        let fields = match &e {
            TaskError::Invalid(fields) => fields.clone(),
            _ => Vec::new(),
        };
        Self {
            fields,
            ..Self::validation("task", e.to_string())
        }
    }
}

impl From<CacheError> for CliError {
    fn from(e: CacheError) -> Self {
        match e {
            CacheError::Io(_) => Self::io("cache", e.to_string()),
            _ => Self::validation("cache", e.to_string()),
        }
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::Io(_) => Self::io("embeddings", e.to_string()),
            _ => Self::validation("embeddings", e.to_string()),
        }
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::Cache(c) => c.into(),
            _ => Self::validation("strategy", e.to_string()),
        }
    }
}

impl From<SinkError> for CliError {
    fn from(e: SinkError) -> Self {
        let closed_pipe = matches!(&e, SinkError::Io(io) if io.kind() == std::io::ErrorKind::BrokenPipe);
        Self {
            closed_pipe,
            ..Self::io("output", e.to_string())
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Sink { ref source, .. } => Self {
                closed_pipe: matches!(source, SinkError::Io(io) if io.kind() == std::io::ErrorKind::BrokenPipe),
                ..Self::io("output", e.to_string())
            },
            EngineError::Cache(c) => c.into(),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io(_) => Self::io("eval", e.to_string()),
            EvalError::Plan(p) => p.into(),
            EvalError::Engine(b) => (*b).into(),
            _ => Self::validation("eval", e.to_string()),
        }
    }
}
