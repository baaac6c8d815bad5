//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by graph loading, query parsing, sampling, training and
/// evaluation.
#[derive(Debug, thiserror::Error)]
pub enum NqeError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed fact line: {msg}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("query syntax error at byte {offset}: {msg}")]
    Syntax { offset: usize, msg: String },

    #[error("unknown {kind} label `{label}`")]
    UnknownLabel { kind: &'static str, label: String },

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("pattern error: {0}")]
    Pattern(String),

    #[error("arity error: {0}")]
    Arity(String),

    #[error("sampling failed for {query_type}: {msg}")]
    Sampling { query_type: String, msg: String },

    #[error("brute-force guard exceeded: {0}")]
    GuardExceeded(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("bad file format in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("numerical abort: {0}")]
    Numerical(String),
}

impl NqeError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NqeError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 usage/parse, 3 data/precondition,
    /// 4 numerical abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            NqeError::Syntax { .. } | NqeError::InvalidQuery(_) | NqeError::Config(_) => 2,
            NqeError::Numerical(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, NqeError>;
