use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use coldstart_core::adaptation::AdaptError;
use coldstart_core::engine::EngineError;
use coldstart_core::profiling::ProfileError;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Serialize)]
struct ErrorBody {
    code: &'static str,
    message: String,
    details: Value,
}

/// Error response rendered as `{code, message, details}`.
#[derive(Debug, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            details: Value::Null,
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "unprocessable", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code,
            message: self.message,
            details: self.details,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let msg = e.to_string();
        match e {
            EngineError::UnknownUser(id) => ApiError::not_found(msg).with_details(json!({ "user_id": id })),
            EngineError::UnknownSession(id) => ApiError::not_found(msg).with_details(json!({ "session_id": id })),
            EngineError::UnknownItem(id) | EngineError::Adapt(AdaptError::UnknownItem(id)) => {
                ApiError::not_found(msg).with_details(json!({ "item_id": id }))
            }
            EngineError::Adapt(AdaptError::UnknownUser(id)) => {
                ApiError::not_found(msg).with_details(json!({ "user_id": id }))
            }
            EngineError::EmptyCatalog => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "catalog_empty", msg),
            EngineError::Adapt(AdaptError::InvalidEvent(_))
            | EngineError::Profile(ProfileError::InvalidAnswerCount(_))
            | EngineError::Profile(ProfileError::InvalidAnswer(_)) => ApiError::unprocessable(msg),
            EngineError::Invalid(_) => ApiError::bad_request(msg),
            other => {
                tracing::error!(error = %other, "engine failure");
                ApiError::internal(msg)
            }
        }
    }
}

fn rejection(status: StatusCode, text: String) -> ApiError {
    let code = if status == StatusCode::UNPROCESSABLE_ENTITY {
        "unprocessable"
    } else {
        "bad_request"
    };
    ApiError::new(status, code, text)
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        rejection(r.status(), r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        rejection(r.status(), r.body_text())
    }
}

impl From<PathRejection> for ApiError {
    fn from(r: PathRejection) -> Self {
        rejection(r.status(), r.body_text())
    }
}
