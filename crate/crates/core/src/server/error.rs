use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use crate::error::Error;

/// JSON error body: `{status, code, message, detail?}`.
#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(serialize_with = "status_code")]
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

fn status_code<S: serde::Serializer>(s: &StatusCode, ser: S) -> Result<S::Ok, S::Error> {
    ser.serialize_u16(s.as_u16())
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.to_string(),
            message: message.into(),
            detail: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", message)
    }

    pub fn not_found(code: &str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", message)
    }
}

/// HTTP status for an engine error code.
pub fn status_for(err: &Error) -> StatusCode {
    match err.code() {
        "MALFORMED_CSV" | "EMPTY_INPUT" | "INVALID_SPEC" | "INVALID_ACTION" | "INVALID_CONFIG"
        | "RULE_SYNTAX_ERROR" | "RULE_TYPE_ERROR" | "UNSUPPORTED_KIND" => StatusCode::BAD_REQUEST,
        "COLUMN_NOT_FOUND" => StatusCode::NOT_FOUND,
        "STALE_GROUP" | "STALE_RECORD" | "STALE_ACTION" | "NOTHING_TO_UNDO" | "NOTHING_TO_REDO"
        | "VERSION_CONFLICT" | "FINGERPRINT_MISMATCH" => StatusCode::CONFLICT,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

fn detail_for(err: &Error) -> Option<serde_json::Value> {
    use serde_json::json;
    match err {
        Error::InSpec { spec, source } => {
            let mut d = detail_for(source).unwrap_or_else(|| json!({}));
            d["spec"] = json!(spec);
            Some(d)
        }
        Error::MalformedCsv { row, .. } => Some(json!({ "row": row })),
        Error::NotConvertible { row, column, text } => Some(json!({ "row": row, "column": column, "text": text })),
        Error::Rule(crate::anomaly::rule::RuleError::Syntax { position, expected }) => {
            Some(json!({ "position": position, "expected": expected }))
        }
        Error::Rule(crate::anomaly::rule::RuleError::Type { position, .. }) => Some(json!({ "position": position })),
        Error::VersionConflict { expected, found } => Some(json!({ "expected": expected, "found": found })),
        Error::StaleGroup { group, table } => Some(json!({ "group_version": group, "table_version": table })),
        _ => None,
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        ApiError {
            status: status_for(&err),
            code: err.code().to_string(),
            message: err.to_string(),
            detail: detail_for(&err),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}
