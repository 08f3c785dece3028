use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use heapscope_core::analytics::AnalyticsError;
use heapscope_core::query::{CacheError, ParseError};
use heapscope_core::store::StoreError;
use serde::Serialize;

/// Error body shared by every endpoint and the CLI.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<usize>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            offset: None,
        }
    }

    pub fn unknown_dataset(name: &str) -> Self {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_dataset",
            format!("unknown dataset '{name}'"),
        )
    }

    pub fn unknown_object(id: &str) -> Self {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_object",
            format!("unknown object '{id}'"),
        )
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<ParseError> for ApiError {
    fn from(e: ParseError) -> Self {
        ApiError {
            offset: Some(e.offset),
            ..ApiError::new(StatusCode::BAD_REQUEST, "parse_error", e.to_string())
        }
    }
}

impl From<CacheError> for ApiError {
    fn from(e: CacheError) -> Self {
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "cache_error",
            e.to_string(),
        )
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::UnknownVariable(_) => {
                ApiError::new(StatusCode::BAD_REQUEST, "unknown_variable", e.to_string())
            }
            StoreError::UnknownObject(id) => ApiError::unknown_object(&id.to_string()),
            StoreError::InvalidName(_) => ApiError::bad_request(e.to_string()),
            StoreError::Decode(_) | StoreError::DuplicateAlloc { .. } => {
                ApiError::new(StatusCode::BAD_REQUEST, "invalid_trace", e.to_string())
            }
            _ => ApiError::internal(e.to_string()),
        }
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        match e {
            AnalyticsError::Parse { part, error } => ApiError {
                offset: Some(error.offset),
                ..ApiError::new(
                    StatusCode::BAD_REQUEST,
                    "parse_error",
                    format!("part {part}: {error}"),
                )
            },
            AnalyticsError::Cache(e) => e.into(),
            AnalyticsError::Variable(e) => e.into(),
            other => ApiError::bad_request(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}
