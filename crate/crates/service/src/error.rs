use axum::extract::rejection::QueryRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use nftscope_core::indicators::IndicatorError;
use nftscope_core::storage::StorageError;
use serde::Serialize;

/// Error body for every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    pub http_status: u16,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            http_status: status.as_u16(),
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_query", message)
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    fn internal(detail: impl std::fmt::Display) -> Self {
        eprintln!("nftscope-service: internal error: {detail}");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "internal error")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

impl From<StorageError> for ApiError {
    fn from(e: StorageError) -> Self {
        match e {
            StorageError::UnknownCollection(_) | StorageError::InvalidId(_) => {
                Self::not_found("unknown_collection", e.to_string())
            }
            StorageError::RarityNotComputed(_) => Self::not_found("rarity_not_computed", e.to_string()),
            StorageError::InvalidQuery(m) => Self::bad_request(m),
            StorageError::Corrupt { .. } | StorageError::Ingest(_) | StorageError::Io(_) => Self::internal(e),
        }
    }
}

impl From<IndicatorError> for ApiError {
    fn from(e: IndicatorError) -> Self {
        match e {
            IndicatorError::UnknownToken(_) => Self::not_found("unknown_token", e.to_string()),
            IndicatorError::EmptyRange { .. } => Self::new(StatusCode::BAD_REQUEST, "invalid_range", e.to_string()),
            IndicatorError::InvalidPolicy | IndicatorError::NotASale => Self::internal(e),
        }
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}
