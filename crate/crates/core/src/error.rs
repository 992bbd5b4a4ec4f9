use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid target length {0:?}: expected one of 10, 30, 50, 80, 150, 300, 500, 700, >800")]
    InvalidTarget(String),

    #[error("cannot score an empty evaluation")]
    EmptyEvaluation,

    #[error("requested {requested} questions but the source only has {available} distinct questions")]
    InsufficientSource { requested: usize, available: usize },

    #[error("requested an empty dataset")]
    EmptyRequest,

    #[error("{}:{line}: {message}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("answer list is empty")]
    NoAnswers,

    #[error("unknown chat template {0:?}")]
    UnknownTemplate(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("backend cannot continue from an assistant prefix (api_style = chat without assistant_prefill)")]
    PrefillUnsupported,

    #[error("address {0} is already in use")]
    AddressInUse(String),

    #[error("reports cover different target lengths")]
    ReportMismatch,

    #[error("no record carries a parsed meta length token")]
    DistributionUndefined,

    #[error("backend request failed: {0}")]
    Backend(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code, used in persisted records and CLI output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidTarget(_) => "INVALID_TARGET",
            Error::EmptyEvaluation => "EMPTY_EVALUATION",
            Error::InsufficientSource { .. } => "INSUFFICIENT_SOURCE",
            Error::EmptyRequest => "EMPTY_REQUEST",
            Error::Malformed { .. } => "MALFORMED_RECORD",
            Error::NoAnswers => "NO_ANSWERS",
            Error::UnknownTemplate(_) => "UNKNOWN_TEMPLATE",
            Error::InvalidConfig(_) => "INVALID_CONFIG",
            Error::PrefillUnsupported => "PREFILL_UNSUPPORTED",
            Error::AddressInUse(_) => "ADDRESS_IN_USE",
            Error::ReportMismatch => "REPORT_MISMATCH",
            Error::DistributionUndefined => "DISTRIBUTION_UNDEFINED",
            Error::Backend(_) => "BACKEND_FAILURE",
            Error::Io(_) => "IO",
            Error::Json(_) => "JSON",
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, line: usize, message: impl ToString) -> Self {
        Error::Malformed {
            path: path.into(),
            line,
            message: message.to_string(),
        }
    }
}
