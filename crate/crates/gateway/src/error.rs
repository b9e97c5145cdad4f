use kbqa_core::{KbError, PipelineError, StructureError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("dataset {0:?} is not registered")]
    DatasetNotFound(String),
    #[error("dataset {0:?} is already registered")]
    DuplicateId(String),
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {source}")]
    Kb {
        path: String,
        #[source]
        source: KbError,
    },
    #[error("{path}: {source}")]
    ParseBank {
        path: String,
        #[source]
        source: StructureError,
    },
    #[error("{path}: line {line}: {message}")]
    Aliases {
        path: String,
        line: usize,
        message: String,
    },
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl GatewayError {
    /// Stable machine-readable code of the error payload.
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::DatasetNotFound(_) => "DATASET_NOT_FOUND",
            GatewayError::DuplicateId(_) => "DUPLICATE_ID",
            GatewayError::Io { .. } => "LOAD_ERROR",
            GatewayError::InvalidDescriptor(_)
            | GatewayError::Kb { .. }
            | GatewayError::ParseBank { .. }
            | GatewayError::Aliases { .. }
            | GatewayError::BadRequest(_) => "PARSE_ERROR",
            GatewayError::Pipeline(e) => e.code(),
        }
    }

    pub fn http_status(&self) -> u16 {
        match self.code() {
            "DATASET_NOT_FOUND" => 404,
            "DUPLICATE_ID" => 409,
            "NO_MATCH" => 422,
            "SERVICE_UNAVAILABLE" => 502,
            "LLM_UNAVAILABLE" => 503,
            "PARSE_ERROR" | "LOAD_ERROR" => 400,
            _ => 500,
        }
    }
}
