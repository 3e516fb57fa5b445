use std::collections::BTreeMap;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use fmea_core::generation::GenerationError;
use fmea_core::index::IndexError;
use fmea_core::ingestion::IngestError;
use fmea_core::model::StudyError;
use fmea_core::persistence::PersistenceError;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// The published set of error codes. Clients may match on these strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    StepOrderViolation,
    Unparseable,
    ServiceUnavailable,
    ValidationFailed,
    NotFound,
    EmptyDocument,
    EmptyTree,
    InternalError,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 8] = [
        ErrorCode::StepOrderViolation,
        ErrorCode::Unparseable,
        ErrorCode::ServiceUnavailable,
        ErrorCode::ValidationFailed,
        ErrorCode::NotFound,
        ErrorCode::EmptyDocument,
        ErrorCode::EmptyTree,
        ErrorCode::InternalError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::StepOrderViolation => "STEP_ORDER_VIOLATION",
            ErrorCode::Unparseable => "UNPARSEABLE",
            ErrorCode::ServiceUnavailable => "SERVICE_UNAVAILABLE",
            ErrorCode::ValidationFailed => "VALIDATION_FAILED",
            ErrorCode::NotFound => "NOT_FOUND",
            ErrorCode::EmptyDocument => "EMPTY_DOCUMENT",
            ErrorCode::EmptyTree => "EMPTY_TREE",
            ErrorCode::InternalError => "INTERNAL_ERROR",
        }
    }

    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::StepOrderViolation | ErrorCode::EmptyTree => StatusCode::CONFLICT,
            ErrorCode::Unparseable => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::ServiceUnavailable => StatusCode::SERVICE_UNAVAILABLE,
            ErrorCode::ValidationFailed | ErrorCode::EmptyDocument => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::InternalError => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<BTreeMap<String, Value>>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into(), details: None }
    }

    pub fn with_detail(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.details.get_or_insert_with(BTreeMap::new).insert(key.to_string(), value.into());
        self
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::ValidationFailed, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::InternalError, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.code == ErrorCode::InternalError {
            tracing::error!(message = %self.message, "internal error");
        }
        (self.code.status(), Json(self)).into_response()
    }
}

impl From<PersistenceError> for ApiError {
    fn from(e: PersistenceError) -> Self {
        let code = match &e {
            PersistenceError::NotFound(_) => ErrorCode::NotFound,
            PersistenceError::EmptyTree => ErrorCode::EmptyTree,
            PersistenceError::IntegrityViolation(_) => ErrorCode::ValidationFailed,
            PersistenceError::StorageUnavailable(_) => ErrorCode::ServiceUnavailable,
            PersistenceError::Corrupt(_) => ErrorCode::InternalError,
        };
        Self::new(code, e.to_string())
    }
}

impl From<GenerationError> for ApiError {
    fn from(e: GenerationError) -> Self {
        let code = match &e {
            GenerationError::StepOrderViolation { .. } => ErrorCode::StepOrderViolation,
            GenerationError::InvalidParent(_) | GenerationError::ValidationFailed(_) => ErrorCode::ValidationFailed,
            GenerationError::UnknownNode(_) | GenerationError::UnknownDocument(_) => ErrorCode::NotFound,
            GenerationError::ServiceUnavailable { .. }
            | GenerationError::Timeout { .. }
            | GenerationError::Retrieval(_) => ErrorCode::ServiceUnavailable,
            GenerationError::Unparseable { .. } => ErrorCode::Unparseable,
        };
        let err = Self::new(code, e.to_string());
        match e {
            GenerationError::Unparseable { raw_response } => err.with_detail("raw_response", raw_response),
            GenerationError::StepOrderViolation { step, .. } => err.with_detail("step", step.as_str()),
            GenerationError::ServiceUnavailable { attempts, .. } | GenerationError::Timeout { attempts } => {
                err.with_detail("attempts", attempts)
            }
            _ => err,
        }
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::EmptyDocument => Self::new(ErrorCode::EmptyDocument, e.to_string()),
            IngestError::Index(inner) => inner.into(),
            other => Self::validation(other.to_string()),
        }
    }
}

impl From<IndexError> for ApiError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::ProviderUnavailable(_) | IndexError::Io(_) => Self::new(ErrorCode::ServiceUnavailable, e.to_string()),
            other => Self::internal(other.to_string()),
        }
    }
}

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        Self::validation(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_serialize_as_published() {
        for code in ErrorCode::ALL {
            assert_eq!(serde_json::to_value(code).unwrap(), code.as_str());
        }
    }

    #[test]
    fn unparseable_echoes_raw_text() {
        let e: ApiError = GenerationError::Unparseable { raw_response: "no list".into() }.into();
        assert_eq!(e.code.status(), StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(e.details.unwrap()["raw_response"], "no list");
    }

    #[test]
    fn details_are_omitted_when_empty() {
        let v = serde_json::to_value(ApiError::not_found("study `x` not found")).unwrap();
        assert_eq!(v, serde_json::json!({"code": "NOT_FOUND", "message": "study `x` not found"}));
    }
}
