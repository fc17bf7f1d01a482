use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use crate::engine::EngineError;
use crate::layers::LayerError;
use crate::persist::PersistError;
use crate::session::SessionError;

/// JSON error body returned with every non-2xx status.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn unknown_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id:?}"))
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        use StatusCode as S;
        let (status, code) = match &e {
            SessionError::InvalidDims { .. } => (S::BAD_REQUEST, "invalid_dims"),
            SessionError::InvalidWeight(_) => (S::BAD_REQUEST, "invalid_weight"),
            SessionError::RatingOutOfRange(_) => (S::BAD_REQUEST, "rating_out_of_range"),
            SessionError::InvalidCadence => (S::BAD_REQUEST, "invalid_cadence"),
            SessionError::WeightPinned => (S::CONFLICT, "weight_pinned"),
            SessionError::ModeUnavailable(_) => (S::CONFLICT, "mode_unavailable"),
            SessionError::ClockRegression { .. } => (S::CONFLICT, "clock_regression"),
            SessionError::UnknownCandidate(_) => (S::NOT_FOUND, "unknown_candidate"),
            SessionError::Layer(LayerError::UnknownLayer(_)) => (S::NOT_FOUND, "unknown_layer"),
            SessionError::Layer(
                LayerError::OpacityOutOfRange(_) | LayerError::IndexOutOfRange { .. } | LayerError::InvalidRadius(_),
            ) => (S::BAD_REQUEST, "invalid_edit"),
            SessionError::Engine(EngineError::PersistenceOutOfRange(_) | EngineError::WeightOutOfRange(_)) => {
                (S::BAD_REQUEST, "invalid_parameter")
            }
            _ => (S::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<PersistError> for ApiError {
    fn from(e: PersistError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "persist_failed", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}
