//! Error mapping onto HTTP responses with stable error codes.

use ahrs_api::{error_code, ErrorBody, ErrorDetail, InvalidRequest};
use ahrs_core::error::{FilterError, RiccatiError};
use ahrs_core::logcsv::LogError;
use ahrs_core::runner::RunError;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;

#[derive(Debug)]
pub enum ApiError {
    Config(String),
    Parse(String),
    Numerical(String),
    NotFound(String),
    Internal(String),
}

impl ApiError {
    fn parts(&self) -> (StatusCode, &'static str, &str) {
        match self {
            ApiError::Config(m) => (StatusCode::BAD_REQUEST, error_code::CONFIG, m),
            ApiError::Parse(m) => (StatusCode::BAD_REQUEST, error_code::PARSE, m),
            ApiError::Numerical(m) => (StatusCode::UNPROCESSABLE_ENTITY, error_code::NUMERICAL, m),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, error_code::NOT_FOUND, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, error_code::INTERNAL, m),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, message) = self.parts();
        let body = ErrorBody {
            error: ErrorDetail {
                code: code.to_string(),
                message: message.to_string(),
            },
        };
        (status, Json(body)).into_response()
    }
}

impl From<InvalidRequest> for ApiError {
    fn from(e: InvalidRequest) -> Self {
        ApiError::Config(e.0)
    }
}

impl From<LogError> for ApiError {
    fn from(e: LogError) -> Self {
        ApiError::Parse(e.to_string())
    }
}

impl From<RiccatiError> for ApiError {
    fn from(e: RiccatiError) -> Self {
        match e {
            // A non-converging steady-state solve means the supplied noise
            // configuration admits no constant gain; reported as a
            // configuration problem, with the residual in the message.
            RiccatiError::NoConvergence { .. } | RiccatiError::Model(_) => {
                ApiError::Config(e.to_string())
            }
            RiccatiError::IndexOutOfRange { .. } => ApiError::Config(e.to_string()),
            RiccatiError::SingularN | RiccatiError::SingularInnovation => {
                ApiError::Numerical(e.to_string())
            }
        }
    }
}

impl From<FilterError> for ApiError {
    fn from(e: FilterError) -> Self {
        match e {
            FilterError::MissingGains(_) | FilterError::InvalidGains(_) | FilterError::Model(_) => {
                ApiError::Config(e.to_string())
            }
            FilterError::Riccati(r) => r.into(),
            FilterError::SingularInnovation
            | FilterError::NonFiniteState { .. }
            | FilterError::DegenerateGeometry { .. } => ApiError::Numerical(e.to_string()),
        }
    }
}

impl From<RunError> for ApiError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::MissingTruth | RunError::TooFewFilters(_) => ApiError::Config(e.to_string()),
            RunError::Metrics(m) => ApiError::Config(m.to_string()),
            RunError::Filter(f) => f.into(),
        }
    }
}

impl From<ahrs_core::error::SimError> for ApiError {
    fn from(e: ahrs_core::error::SimError) -> Self {
        match e {
            ahrs_core::error::SimError::InvalidRun(_) => ApiError::Config(e.to_string()),
            ahrs_core::error::SimError::NonFiniteState { .. } => ApiError::Numerical(e.to_string()),
        }
    }
}
