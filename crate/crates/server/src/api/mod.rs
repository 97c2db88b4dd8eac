//! The REST surface. Every route is declared once in [`table`], with the
//! session class it requires; the router and the OpenAPI document are both
//! generated from that table.

mod accounts;
mod agents;
mod discourse;
mod experiments;
mod stream;

use std::sync::Arc;
use std::time::Duration;

use axum::extract::{FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::header::AUTHORIZATION;
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, patch, post, put, MethodRouter};
use axum::{Json, Router};
use pds_core::{Platform, PdsError, UserId};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{ApiError, ApiResult};
use crate::events::EventHub;

/// How much of a session a route needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Access {
    /// No session.
    Public,
    /// Any live session, including one that has only passed the password.
    FirstFactor,
    /// Second factor passed; consent documents may still be outdated.
    SecondFactor,
    /// Second factor passed and consents current.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RouteSpec {
    pub method: &'static str,
    pub path: &'static str,
    pub access: Access,
    pub summary: &'static str,
}

impl RouteSpec {
    /// Routes under `/auth/` and the unauthenticated ones.
    pub fn is_auth_route(&self) -> bool {
        self.access == Access::Public || self.path.starts_with("/auth/")
    }
}

/// The caller resolved by the access layer.
#[derive(Debug, Clone)]
pub struct Caller {
    pub user: UserId,
    pub token: String,
}

#[derive(Clone)]
pub struct AppState {
    pub platform: Arc<Platform>,
    pub hub: Arc<EventHub>,
    pub keepalive: Duration,
}

impl AppState {
    pub fn new(platform: Arc<Platform>, hub: Arc<EventHub>) -> Self {
        Self {
            platform,
            hub,
            keepalive: stream::KEEPALIVE,
        }
    }

    /// Runs a core call on the blocking pool.
    pub async fn run<T, F>(&self, f: F) -> ApiResult<T>
    where
        T: Send + 'static,
        F: FnOnce(&Platform) -> pds_core::Result<T> + Send + 'static,
    {
        let platform = self.platform.clone();
        tokio::task::spawn_blocking(move || f(&platform))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?
            .map_err(ApiError::from)
    }
}

/// JSON body extractor whose rejections use the API error shape.
pub struct Body<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(rejection) => Err(ApiError::new(
                rejection.status(),
                "BadRequest",
                rejection.body_text(),
            )),
        }
    }
}

/// Query string extractor with API-shaped rejections.
pub struct QueryArgs<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequestParts<S> for QueryArgs<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        Query::<T>::from_request_parts(parts, state)
            .await
            .map(|Query(v)| QueryArgs(v))
            .map_err(|r| ApiError::new(r.status(), "BadRequest", r.body_text()))
    }
}

/// Path parameter extractor with API-shaped rejections.
pub struct PathArgs<T>(pub T);

impl<T: DeserializeOwned + Send, S: Send + Sync> FromRequestParts<S> for PathArgs<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        Path::<T>::from_request_parts(parts, state)
            .await
            .map(|Path(v)| PathArgs(v))
            .map_err(|r| ApiError::new(r.status(), "BadRequest", r.body_text()))
    }
}

pub(crate) fn ok<T: Serialize>(value: T) -> Response {
    Json(value).into_response()
}

pub(crate) fn created<T: Serialize>(value: T) -> Response {
    (StatusCode::CREATED, Json(value)).into_response()
}

fn bearer(req: &Request, allow_query: bool) -> Option<String> {
    if let Some(token) = req
        .headers()
        .get(AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
    {
        return Some(token.trim().to_string());
    }
    if !allow_query {
        return None;
    }
    // EventSource cannot set headers
    req.uri().query().and_then(|q| {
        url::form_urlencoded::parse(q.as_bytes())
            .find(|(k, _)| k == "access_token")
            .map(|(_, v)| v.into_owned())
    })
}

async fn require(
    State((state, access, allow_query)): State<(AppState, Access, bool)>,
    mut req: Request,
    next: Next,
) -> Response {
    let Some(token) = bearer(&req, allow_query) else {
        return ApiError::from(PdsError::Unauthorized).into_response();
    };
    let t = token.clone();
    let resolved = state
        .run(move |p| match access {
            Access::Full => p.require_full_session(&t),
            Access::SecondFactor => {
                let ctx = p.authenticate(&t)?;
                if ctx.second_factor_passed {
                    Ok(ctx.user)
                } else {
                    Err(PdsError::SecondFactorRequired)
                }
            }
            Access::FirstFactor | Access::Public => p.authenticate(&t).map(|c| c.user),
        })
        .await;
    match resolved {
        Ok(user) => {
            req.extensions_mut().insert(Caller { user, token });
            next.run(req).await
        }
        Err(e) => e.into_response(),
    }
}

pub struct Route {
    pub spec: RouteSpec,
    handler: MethodRouter<AppState>,
}

fn r(
    method: &'static str,
    path: &'static str,
    access: Access,
    summary: &'static str,
    handler: MethodRouter<AppState>,
) -> Route {
    Route {
        spec: RouteSpec {
            method,
            path,
            access,
            summary,
        },
        handler,
    }
}

/// Every route the gateway serves.
pub fn table() -> Vec<Route> {
    use Access::*;
    vec![
        r("GET", "/healthz", Public, "Liveness probe", get(health)),
        r("GET", "/api/openapi.json", Public, "This API description", get(openapi)),
        r("GET", "/api/consents", Public, "Current consent documents", get(accounts::consent_documents)),
        r("POST", "/auth/register", Public, "Register a participant account", post(accounts::register)),
        r("POST", "/auth/researcher-request", Public, "Register and request researcher access", post(accounts::researcher_request)),
        r("POST", "/auth/login", Public, "Password login; returns a first-factor session", post(accounts::login)),
        r("POST", "/auth/password-reset", Public, "Send a password reset email", post(accounts::password_reset)),
        r("POST", "/auth/password-reset/confirm", Public, "Set a new password from a reset token", post(accounts::password_reset_confirm)),
        r("POST", "/auth/2fa/enroll", FirstFactor, "Start TOTP enrollment", post(accounts::enroll)),
        r("POST", "/auth/2fa/verify", FirstFactor, "Confirm a device and/or pass the second factor", post(accounts::verify)),
        r("POST", "/auth/logout", FirstFactor, "End the session", post(accounts::logout)),
        r("GET", "/auth/consents", SecondFactor, "Consent documents and what is outdated", get(accounts::consents)),
        r("POST", "/auth/consents", SecondFactor, "Accept current consent documents", post(accounts::accept_consents)),
        r("GET", "/api/invitations/{token}", Public, "Invitation summary for the accept page", get(experiments::invitation_summary)),
        r("GET", "/account", Full, "The caller's account", get(accounts::me)),
        r("PATCH", "/account", Full, "Update profile fields and photos", patch(accounts::update_me)),
        r("GET", "/api/users/{id}", Full, "Public profile of an account", get(accounts::profile)),
        r("GET", "/api/media/{id}", Full, "Stored media bytes", get(accounts::media)),
        r("GET", "/api/admin/researcher-requests", Full, "Researcher requests (admin)", get(accounts::researcher_requests)),
        r("POST", "/api/admin/researcher-requests/{id}/decision", Full, "Approve or reject a researcher request (admin)", post(accounts::decide_researcher_request)),
        r("POST", "/api/experiments", Full, "Create an experiment (researcher)", post(experiments::create)),
        r("GET", "/api/experiments", Full, "Memberships and pending invitations", get(experiments::list)),
        r("GET", "/api/experiments/{id}", Full, "Experiment details", get(experiments::show)),
        r("PATCH", "/api/experiments/{id}", Full, "Configure an experiment", patch(experiments::update)),
        r("GET", "/api/experiments/{id}/members", Full, "Members of an experiment", get(experiments::members)),
        r("POST", "/api/experiments/{id}/invitations", Full, "Invite by email", post(experiments::invite)),
        r("POST", "/api/invitations/{token}/accept", Full, "Accept an invitation", post(experiments::accept)),
        r("POST", "/api/invitations/{token}/resend", Full, "Resend an invitation email", post(experiments::resend)),
        r("DELETE", "/api/invitations/{token}", Full, "Revoke an invitation", delete(experiments::revoke)),
        r("DELETE", "/api/experiments/{id}/members/{user}", Full, "Remove a member", delete(experiments::remove_member)),
        r("POST", "/api/experiments/{id}/bans", Full, "Ban a member", post(experiments::ban)),
        r("POST", "/api/experiments/{id}/reports", Full, "Report a member", post(experiments::report)),
        r("GET", "/api/experiments/{id}/reports", Full, "Open and resolved reports (staff)", get(experiments::reports)),
        r("POST", "/api/experiments/{id}/reports/{report}/resolve", Full, "Resolve a report (staff)", post(experiments::resolve_report)),
        r("POST", "/api/experiments/{id}/posts", Full, "Create a post", post(discourse::create_post)),
        r("GET", "/api/experiments/{id}/feed/home", Full, "Posts by followed accounts", get(discourse::home)),
        r("GET", "/api/experiments/{id}/feed/explore", Full, "All posts", get(discourse::explore)),
        r("GET", "/api/experiments/{id}/hashtags/{tag}", Full, "Posts carrying a hashtag", get(discourse::hashtag)),
        r("GET", "/api/experiments/{id}/search", Full, "Search posts and accounts", get(discourse::search)),
        r("GET", "/api/experiments/{id}/trending", Full, "Top hashtags", get(discourse::trending)),
        r("GET", "/api/experiments/{id}/users/{user}/posts", Full, "Posts by one member", get(discourse::author)),
        r("GET", "/api/experiments/{id}/flags", Full, "Moderation flags", get(discourse::flags)),
        r("GET", "/api/posts/{id}", Full, "A post with its thread", get(discourse::thread)),
        r("DELETE", "/api/posts/{id}", Full, "Delete a post", delete(discourse::delete_post)),
        r("POST", "/api/posts/{id}/replies", Full, "Reply to a post", post(discourse::reply)),
        r("PUT", "/api/posts/{id}/like", Full, "Like a post", put(discourse::like)),
        r("DELETE", "/api/posts/{id}/like", Full, "Undo a like", delete(discourse::unlike)),
        r("POST", "/api/posts/{id}/repost", Full, "Repost a post", post(discourse::repost)),
        r("POST", "/api/posts/{id}/flags", Full, "Flag a post for review", post(discourse::flag)),
        r("POST", "/api/flags/{id}/resolve", Full, "Dismiss a flag or delete the post", post(discourse::resolve_flag)),
        r("PUT", "/api/users/{id}/follow", Full, "Follow an account within an experiment", put(discourse::follow)),
        r("DELETE", "/api/users/{id}/follow", Full, "Unfollow an account within an experiment", delete(discourse::unfollow)),
        r("GET", "/api/notifications", Full, "Notifications, optionally filtered", get(discourse::notifications)),
        r("POST", "/api/notifications/seen", Full, "Mark notifications seen", post(discourse::mark_seen)),
        r("POST", "/api/experiments/{id}/agents", Full, "Register an agent (staff)", post(agents::register)),
        r("GET", "/api/experiments/{id}/agents", Full, "Agents of an experiment (staff)", get(agents::list)),
        r("GET", "/api/agents/{id}", Full, "One agent (staff)", get(agents::show)),
        r("PATCH", "/api/agents/{id}", Full, "Update an agent (staff)", patch(agents::update)),
        r("GET", "/api/agents/{id}/tasks", Full, "Agent task log (staff)", get(agents::tasks)),
        r("GET", "/api/experiments/{id}/export", Full, "Export as a zip bundle (staff)", get(experiments::export)),
        r("GET", "/api/events", Full, "Server-sent live events", get(stream::events)),
    ]
}

pub fn specs() -> Vec<RouteSpec> {
    table().into_iter().map(|r| r.spec).collect()
}

pub fn router(state: AppState) -> Router {
    let mut router = Router::new();
    for Route { spec, handler } in table() {
        let handler = if spec.access == Access::Public {
            handler
        } else {
            let allow_query = spec.path == "/api/events";
            handler.route_layer(middleware::from_fn_with_state(
                (state.clone(), spec.access, allow_query),
                require,
            ))
        };
        router = router.route(spec.path, handler);
    }
    router
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such route") })
        .with_state(state)
}

async fn health() -> Response {
    ok(serde_json::json!({ "status": "ok" }))
}

async fn openapi() -> Response {
    ok(crate::openapi::document(&specs()))
}
