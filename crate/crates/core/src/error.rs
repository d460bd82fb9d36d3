use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::{ImageId, QuestionId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: parse error: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("duplicate question_id {0}")]
    DuplicateQuestion(QuestionId),

    #[error("question {question_id} has {found} answers, expected 10")]
    AnswerCount {
        question_id: QuestionId,
        found: usize,
    },

    #[error("missing annotations for questions {0:?}")]
    MissingAnnotations(Vec<QuestionId>),

    #[error("missing captions for images {0:?}")]
    MissingCaptions(Vec<ImageId>),

    #[error("config error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("fusion error: {0}")]
    Fusion(String),

    #[error("adapter `{name}` failed: {message}")]
    Adapter { name: String, message: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::DuplicateQuestion(_)
            | Error::AnswerCount { .. }
            | Error::MissingAnnotations(_)
            | Error::MissingCaptions(_)
            | Error::Io { .. } => ErrorKind::Data,
            Error::Numeric(_)
            | Error::Fusion(_)
            | Error::Adapter { .. }
            | Error::Precondition(_) => ErrorKind::Runtime,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
