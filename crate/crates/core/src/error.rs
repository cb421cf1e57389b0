use thiserror::Error;

/// Errors raised by the pruning toolkit.
///
/// Variants are grouped by the way a caller is expected to react: usage
/// errors are caller mistakes, parse/integrity/format errors mean the input
/// data is bad, numeric errors come out of training.
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error in {record}: {message}")]
    Parse { record: String, message: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("format error at {location}: {message}")]
    Format { location: String, message: String },

    #[error("degenerate dataset: {0}")]
    Degenerate(String),

    #[error("numeric error in {block}: {message}")]
    Numeric { block: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn parse(record: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            record: record.into(),
            message: message.into(),
        }
    }

    pub(crate) fn format(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn numeric(block: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Numeric {
            block: block.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
