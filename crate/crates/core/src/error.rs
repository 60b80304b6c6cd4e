//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or vector dimensions do not line up.
    #[error("shape error in {context}: expected {expected}, got {got}")]
    Shape {
        context: String,
        expected: String,
        got: String,
    },

    /// An input violated a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// A policy, config file, or flag combination is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Feature index outside `[0, N)`.
    #[error("feature index {index} out of range (hidden width {width})")]
    FeatureIndex { index: usize, width: usize },

    /// A feature that never activates cannot be scaled into a steering factor.
    #[error("degenerate feature {feature}: max activation is zero, cannot derive steering factors")]
    DegenerateFeature { feature: usize },

    /// Non-finite value where a finite one is required.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A named tensor is missing from a weights container.
    #[error("missing tensor `{name}` in {path}")]
    MissingTensor { name: String, path: PathBuf },

    /// A tensor exists but its shape or dtype does not match the expectation.
    #[error("tensor `{name}`: {detail}")]
    TensorMismatch { name: String, detail: String },

    /// Malformed row in a line-oriented input file.
    #[error("{path}:{line}: {detail}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    /// Token id outside the vocabulary, or text the tokenizer cannot represent.
    #[error("tokenizer error: {0}")]
    Tokenizer(String),

    /// A remote detector/judge returned something outside its wire contract.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Transport-level failure talking to a remote client (after retries).
    #[error("transport error: {0}")]
    Transport(String),

    /// Statistic undefined for the given data (e.g. zero variance).
    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn shape(context: impl Into<String>, expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
