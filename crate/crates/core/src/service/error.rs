use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{FromRequest, FromRequestParts, Request};
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::analytics::AnalyticsError;
use crate::cohort::CohortError;
use crate::dataset::DatasetError;
use crate::ml::MlError;

/// Error body `{code, message, detail}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into(), detail: Value::Null }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn unprocessable(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    pub fn conflict(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "code": self.code, "message": self.message, "detail": self.detail }))).into_response()
    }
}

impl From<MlError> for ApiError {
    fn from(e: MlError) -> Self {
        match e {
            MlError::InvalidConfig(_) | MlError::TooFewSubjects { .. } => Self::unprocessable("invalid_config", e.to_string()),
            _ => Self::unprocessable("pipeline_error", e.to_string()),
        }
    }
}

impl From<CohortError> for ApiError {
    fn from(e: CohortError) -> Self {
        Self::unprocessable("invalid_cohort", e.to_string())
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        match e {
            AnalyticsError::Matrix(crate::matrix::MatrixError::UnknownFeature(_)) => Self::not_found("unknown_feature", e.to_string()),
            AnalyticsError::UnknownSubject(_) => Self::not_found("unknown_subject", e.to_string()),
            _ => Self::unprocessable("analytics_error", e.to_string()),
        }
    }
}

impl From<DatasetError> for ApiError {
    fn from(e: DatasetError) -> Self {
        match &e {
            DatasetError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                Self::not_found("not_found", e.to_string())
            }
            DatasetError::Feature(crate::features::FeatureError::MissingVolume { .. }) => {
                Self::not_found("measure_unavailable", e.to_string())
            }
            _ => Self::unprocessable("dataset_error", e.to_string()),
        }
    }
}

pub async fn not_found() -> ApiError {
    ApiError::not_found("no_route", "no such endpoint")
}

/// JSON body whose rejection is reported in the API error format.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(e) => Err(rejected_json(e)),
        }
    }
}

fn rejected_json(e: JsonRejection) -> ApiError {
    let code = if e.status() == StatusCode::UNPROCESSABLE_ENTITY { "invalid_body" } else { "bad_request" };
    ApiError::new(e.status(), code, e.body_text())
}

/// Query string whose rejection is reported in the API error format.
pub struct Params<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequestParts<S> for Params<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, ApiError> {
        axum::extract::Query::<T>::from_request_parts(parts, state)
            .await
            .map(|q| Params(q.0))
            .map_err(|e: QueryRejection| ApiError::new(StatusCode::BAD_REQUEST, "bad_query", e.body_text()))
    }
}
