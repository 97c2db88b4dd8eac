use thiserror::Error;

use crate::agents::inference::InferenceError;
use crate::experiments::permissions::Role;
use crate::identity::ConsentKind;

pub type Result<T, E = PdsError> = std::result::Result<T, E>;

/// Every failure a platform operation can report. [`PdsError::code`] is the
/// stable wire name.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdsError {
    // identity
    #[error("handle is already taken")]
    DuplicateHandle,
    #[error("email is already registered")]
    DuplicateEmail,
    #[error("password must be at least {min} characters")]
    WeakPassword { min: usize },
    #[error("consent to {0} is required")]
    MissingConsent(ConsentKind),
    #[error("consent to current document versions is required: {0:?}")]
    ConsentRequired(Vec<ConsentKind>),
    #[error("researcher field `{0}` must not be empty")]
    EmptyResearcherField(&'static str),
    #[error("handle must be 3-32 characters of a-z, 0-9 or _")]
    InvalidHandle,
    #[error("email address is not valid")]
    InvalidEmail,
    #[error("`{field}` exceeds {max} characters")]
    FieldTooLong { field: &'static str, max: usize },
    #[error("caller is not a platform administrator")]
    NotAdmin,
    #[error("request was already decided")]
    AlreadyDecided,
    #[error("researcher request not found")]
    RequestNotFound,
    #[error("verification code is not valid")]
    BadCode,
    #[error("unknown 2FA device")]
    UnknownDevice,
    #[error("invalid credentials")]
    BadCredentials,
    #[error("second factor required")]
    SecondFactorRequired,
    #[error("authentication required")]
    Unauthorized,
    #[error("media exceeds {max_bytes} bytes")]
    MediaTooLarge { max_bytes: usize },
    #[error("unsupported media type `{0}`")]
    UnsupportedMediaType(String),
    #[error("reset token is invalid or expired")]
    ResetTokenInvalid,
    #[error("user not found")]
    UserNotFound,
    #[error("`{0}` must not be empty")]
    EmptyField(&'static str),

    // experiments
    #[error("caller is not a researcher")]
    NotResearcher,
    #[error("public experiments are not supported")]
    PublicNotSupported,
    #[error("an IRB document is required")]
    MissingIrbDocument,
    #[error("role {role:?} may not perform `{action}`")]
    Forbidden { role: Option<Role>, action: String },
    #[error("user is already a member")]
    AlreadyMember,
    #[error("a pending invitation already exists for this email")]
    DuplicatePendingInvitation,
    #[error("invitation not found")]
    InvitationNotFound,
    #[error("invitation has expired")]
    TokenExpired,
    #[error("invitation was already used")]
    TokenUsed,
    #[error("invitation was issued to a different email")]
    EmailMismatch,
    #[error("the experiment owner cannot be removed")]
    CannotRemoveOwner,
    #[error("not an active member of this experiment")]
    NotAMember,
    #[error("users cannot report themselves")]
    SelfReport,
    #[error("a reason is required")]
    EmptyReason,
    #[error("report not found")]
    ReportNotFound,
    #[error("experiment not found")]
    ExperimentNotFound,
    #[error("role cannot be assigned by invitation")]
    InvalidRole,

    // discourse
    #[error("post body exceeds {max} characters")]
    BodyTooLong { max: usize },
    #[error("post body is empty")]
    BodyEmpty,
    #[error("content rejected by moderation ({reason})")]
    ModerationRejected {
        matched_terms: Vec<String>,
        reason: String,
    },
    #[error("parent post not found")]
    ParentNotFound,
    #[error("parent post was deleted")]
    ParentDeleted,
    #[error("post already liked")]
    AlreadyLiked,
    #[error("post is not liked")]
    NotLiked,
    #[error("post not found")]
    PostNotFound,
    #[error("post was deleted")]
    PostDeleted,
    #[error("users cannot follow themselves")]
    SelfFollow,
    #[error("already following")]
    AlreadyFollowing,
    #[error("not following")]
    NotFollowing,

    // moderation
    #[error("flag not found")]
    FlagNotFound,
    #[error("flag is not open")]
    FlagNotOpen,

    // feeds
    #[error("query must be at most {max} characters")]
    QueryTooLong { max: usize },
    #[error("query must not be empty")]
    QueryEmpty,
    #[error("unknown notification filter `{0}`")]
    UnknownFilter(String),
    #[error("malformed cursor")]
    BadCursor,

    // agents
    #[error("invalid inference endpoint: {0}")]
    InvalidEndpoint(String),
    #[error("agent not found")]
    AgentNotFound,
    #[error("task not found")]
    TaskNotFound,
    #[error("inference failed: {0}")]
    Inference(InferenceError),
    #[error("agent is rate limited")]
    RateLimited,

    // store / mail
    #[error("email provider failure: {0}")]
    ProviderFailure(String),
    #[error("storage error: {0}")]
    Storage(String),
    #[error("malformed export bundle: {0}")]
    BadBundle(String),
}

impl PdsError {
    /// The error name used on the wire (`{code, message, details}`).
    pub fn code(&self) -> &'static str {
        use PdsError::*;
        match self {
            DuplicateHandle => "DuplicateHandle",
            DuplicateEmail => "DuplicateEmail",
            WeakPassword { .. } => "WeakPassword",
            MissingConsent(_) => "MissingConsent",
            ConsentRequired(_) => "ConsentRequired",
            EmptyResearcherField(_) => "EmptyResearcherField",
            InvalidHandle => "InvalidHandle",
            InvalidEmail => "InvalidEmail",
            FieldTooLong { .. } => "FieldTooLong",
            NotAdmin => "NotAdmin",
            AlreadyDecided => "AlreadyDecided",
            RequestNotFound => "RequestNotFound",
            BadCode => "BadCode",
            UnknownDevice => "UnknownDevice",
            BadCredentials => "BadCredentials",
            SecondFactorRequired => "SecondFactorRequired",
            Unauthorized => "Unauthorized",
            MediaTooLarge { .. } => "MediaTooLarge",
            UnsupportedMediaType(_) => "UnsupportedMediaType",
            ResetTokenInvalid => "ResetTokenInvalid",
            UserNotFound => "UserNotFound",
            EmptyField(_) => "EmptyField",
            NotResearcher => "NotResearcher",
            PublicNotSupported => "PublicNotSupported",
            MissingIrbDocument => "MissingIrbDocument",
            Forbidden { .. } => "Forbidden",
            AlreadyMember => "AlreadyMember",
            DuplicatePendingInvitation => "DuplicatePendingInvitation",
            InvitationNotFound => "InvitationNotFound",
            TokenExpired => "TokenExpired",
            TokenUsed => "TokenUsed",
            EmailMismatch => "EmailMismatch",
            CannotRemoveOwner => "CannotRemoveOwner",
            NotAMember => "NotAMember",
            SelfReport => "SelfReport",
            EmptyReason => "EmptyReason",
            ReportNotFound => "ReportNotFound",
            ExperimentNotFound => "ExperimentNotFound",
            InvalidRole => "InvalidRole",
            BodyTooLong { .. } => "BodyTooLong",
            BodyEmpty => "BodyEmpty",
            ModerationRejected { .. } => "ModerationRejected",
            ParentNotFound => "ParentNotFound",
            ParentDeleted => "ParentDeleted",
            AlreadyLiked => "AlreadyLiked",
            NotLiked => "NotLiked",
            PostNotFound => "PostNotFound",
            PostDeleted => "PostDeleted",
            SelfFollow => "SelfFollow",
            AlreadyFollowing => "AlreadyFollowing",
            NotFollowing => "NotFollowing",
            FlagNotFound => "FlagNotFound",
            FlagNotOpen => "FlagNotOpen",
            QueryTooLong { .. } => "QueryTooLong",
            QueryEmpty => "QueryEmpty",
            UnknownFilter(_) => "UnknownFilter",
            BadCursor => "BadCursor",
            InvalidEndpoint(_) => "InvalidEndpoint",
            AgentNotFound => "AgentNotFound",
            TaskNotFound => "TaskNotFound",
            Inference(e) => e.code(),
            RateLimited => "RateLimited",
            ProviderFailure(_) => "ProviderFailure",
            Storage(_) => "Storage",
            BadBundle(_) => "BadBundle",
        }
    }

    /// Structured details for the wire error body, when the variant carries any.
    pub fn details(&self) -> serde_json::Value {
        use serde_json::json;
        match self {
            PdsError::MissingConsent(kind) => json!({ "document_kind": kind }),
            PdsError::ConsentRequired(kinds) => json!({ "document_kinds": kinds }),
            PdsError::EmptyResearcherField(field) | PdsError::EmptyField(field) => {
                json!({ "field": field })
            }
            PdsError::FieldTooLong { field, max } => json!({ "field": field, "max": max }),
            PdsError::Forbidden { role, action } => json!({ "role": role, "action": action }),
            PdsError::ModerationRejected {
                matched_terms,
                reason,
            } => json!({ "matched_terms": matched_terms, "reason": reason }),
            PdsError::BodyTooLong { max } | PdsError::QueryTooLong { max } => json!({ "max": max }),
            PdsError::MediaTooLarge { max_bytes } => json!({ "max_bytes": max_bytes }),
            PdsError::Inference(InferenceError::Http(status)) => json!({ "status": status }),
            _ => serde_json::Value::Null,
        }
    }

    pub(crate) fn forbidden(role: Option<Role>, action: impl Into<String>) -> Self {
        PdsError::Forbidden {
            role,
            action: action.into(),
        }
    }
}
