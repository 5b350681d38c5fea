use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Error, Debug)]
pub enum Error {
    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("no R peaks detected")]
    EmptyDetection,

    #[error("no complete slice windows fit inside the record")]
    EmptySliceSet,

    #[error("entity `{0}` is already enrolled")]
    DuplicateEntity(String),

    #[error("insufficient data: need {needed_s} s, record has {got_s} s")]
    InsufficientData { needed_s: f64, got_s: f64 },

    #[error("enrollment of `{entity}` failed: {source}")]
    EnrollFailure {
        entity: String,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported database version `{found}`")]
    Version { found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
