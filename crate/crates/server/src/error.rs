use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use pds_core::PdsError;
use serde_json::{json, Value};

/// A JSON error body: `{code, message, details}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    pub details: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.into(),
            message: message.into(),
            details: Value::Null,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadRequest", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

pub fn status_of(err: &PdsError) -> StatusCode {
    use PdsError::*;
    match err {
        Unauthorized | SecondFactorRequired | BadCredentials => StatusCode::UNAUTHORIZED,
        NotAMember | Forbidden { .. } | NotAdmin | NotResearcher | ConsentRequired(_)
        | EmailMismatch => StatusCode::FORBIDDEN,
        RequestNotFound | UnknownDevice | UserNotFound | InvitationNotFound | ReportNotFound
        | ExperimentNotFound | ParentNotFound | PostNotFound | FlagNotFound | AgentNotFound
        | TaskNotFound => StatusCode::NOT_FOUND,
        DuplicateHandle | DuplicateEmail | AlreadyDecided | AlreadyMember
        | DuplicatePendingInvitation | TokenUsed | AlreadyLiked | NotLiked | AlreadyFollowing
        | NotFollowing | FlagNotOpen => StatusCode::CONFLICT,
        TokenExpired | ParentDeleted | PostDeleted => StatusCode::GONE,
        MediaTooLarge { .. } => StatusCode::PAYLOAD_TOO_LARGE,
        UnsupportedMediaType(_) => StatusCode::UNSUPPORTED_MEDIA_TYPE,
        RateLimited => StatusCode::TOO_MANY_REQUESTS,
        Inference(_) | ProviderFailure(_) => StatusCode::BAD_GATEWAY,
        Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        BadCursor | UnknownFilter(_) | BadBundle(_) | ResetTokenInvalid => StatusCode::BAD_REQUEST,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

impl From<PdsError> for ApiError {
    fn from(err: PdsError) -> Self {
        Self {
            status: status_of(&err),
            code: err.code().to_string(),
            message: err.to_string(),
            details: err.details(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "code": self.code,
            "message": self.message,
            "details": self.details,
        });
        (self.status, Json(body)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
