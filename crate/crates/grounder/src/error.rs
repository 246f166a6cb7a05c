use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty query")]
    EmptyQuery,

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    Shape {
        what: String,
        expected: String,
        got: String,
    },

    #[error("missing feature blob: {0}")]
    MissingBlob(String),

    #[error("duplicate query_id: {0}")]
    DuplicateQueryId(String),

    #[error("vocabulary too small: need {needed} distinct {kind} tokens, have {have}")]
    VocabTooSmall {
        kind: String,
        needed: usize,
        have: usize,
    },

    #[error("non-finite loss at sample `{query_id}` (epoch {epoch}, batch {batch})")]
    NonFiniteLoss {
        query_id: String,
        epoch: usize,
        batch: usize,
    },

    #[error("invalid span: start={start}, end={end}")]
    InvalidSpan { start: f64, end: f64 },

    #[error("{0}")]
    Invalid(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
