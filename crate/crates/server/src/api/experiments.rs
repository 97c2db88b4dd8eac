use axum::extract::State;
use axum::http::header::{CONTENT_DISPOSITION, CONTENT_TYPE};
use axum::response::{IntoResponse, Response};
use axum::Extension;
use pds_core::experiments::{ExperimentPatch, NewExperiment, Visibility};
use pds_core::{ExperimentId, ReportId, Role, UserId};
use serde::Deserialize;
use serde_json::json;

use super::accounts::MediaBody;
use super::{created, ok, AppState, Body, Caller, PathArgs, QueryArgs};
use crate::error::ApiResult;

#[derive(Debug, Deserialize)]
pub struct CreateBody {
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default = "private")]
    pub visibility: Visibility,
    pub irb_document: Option<MediaBody>,
}

fn private() -> Visibility {
    Visibility::Private
}

pub async fn create(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    Body(body): Body<CreateBody>,
) -> ApiResult<Response> {
    let exp = state
        .run(move |p| {
            let new = NewExperiment {
                title: body.title,
                description: body.description,
                visibility: body.visibility,
                irb_document: body.irb_document.map(MediaBody::decode).transpose()?,
            };
            p.create_experiment(caller.user, new)
        })
        .await?;
    Ok(created(exp))
}

pub async fn list(State(state): State<AppState>, Extension(caller): Extension<Caller>) -> ApiResult<Response> {
    let listing = state.run(move |p| p.experiments_for(caller.user)).await?;
    let memberships: Vec<_> = listing
        .memberships
        .into_iter()
        .map(|(experiment, membership)| json!({ "experiment": experiment, "membership": membership }))
        .collect();
    Ok(ok(json!({
        "memberships": memberships,
        "invitations": listing.invitations,
    })))
}

pub async fn show(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(id): PathArgs<ExperimentId>,
) -> ApiResult<Response> {
    let (experiment, role) = state
        .run(move |p| {
            let scope = p.scoped(id, caller.user)?;
            Ok((p.experiment(&scope), scope.role()))
        })
        .await?;
    Ok(ok(json!({ "experiment": experiment, "role": role })))
}

#[derive(Debug, Deserialize)]
pub struct UpdateBody {
    pub title: Option<String>,
    pub description: Option<String>,
    pub irb_document: Option<MediaBody>,
    pub show_agent_badge: Option<bool>,
}

pub async fn update(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(id): PathArgs<ExperimentId>,
    Body(body): Body<UpdateBody>,
) -> ApiResult<Response> {
    let exp = state
        .run(move |p| {
            let patch = ExperimentPatch {
                title: body.title,
                description: body.description,
                irb_document: body.irb_document.map(MediaBody::decode).transpose()?,
                show_agent_badge: body.show_agent_badge,
            };
            p.update_experiment(caller.user, id, patch)
        })
        .await?;
    Ok(ok(exp))
}

pub async fn members(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(id): PathArgs<ExperimentId>,
) -> ApiResult<Response> {
    let members = state
        .run(move |p| Ok(p.members(&p.scoped(id, caller.user)?)))
        .await?;
    Ok(ok(members))
}

#[derive(Debug, Deserialize)]
pub struct InviteBody {
    pub email: String,
    pub role: Role,
}

pub async fn invite(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(id): PathArgs<ExperimentId>,
    Body(body): Body<InviteBody>,
) -> ApiResult<Response> {
    let inv = state
        .run(move |p| p.invite(caller.user, id, &body.email, body.role))
        .await?;
    Ok(created(inv))
}

pub async fn invitation_summary(
    State(state): State<AppState>,
    PathArgs(token): PathArgs<String>,
) -> ApiResult<Response> {
    Ok(ok(state.run(move |p| p.invitation_preview(&token)).await?))
}

pub async fn accept(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(token): PathArgs<String>,
) -> ApiResult<Response> {
    let membership = state
        .run(move |p| p.accept_invitation(&token, caller.user))
        .await?;
    Ok(ok(membership))
}

pub async fn resend(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(token): PathArgs<String>,
) -> ApiResult<Response> {
    let inv = state
        .run(move |p| p.resend_invitation(caller.user, &token))
        .await?;
    Ok(ok(inv))
}

pub async fn revoke(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(token): PathArgs<String>,
) -> ApiResult<Response> {
    let inv = state
        .run(move |p| p.revoke_invitation(caller.user, &token))
        .await?;
    Ok(ok(inv))
}

pub async fn remove_member(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs((id, user)): PathArgs<(ExperimentId, UserId)>,
) -> ApiResult<Response> {
    let m = state
        .run(move |p| p.remove_member(caller.user, id, user))
        .await?;
    Ok(ok(m))
}

#[derive(Debug, Deserialize)]
pub struct TargetBody {
    pub user: UserId,
}

pub async fn ban(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(id): PathArgs<ExperimentId>,
    Body(body): Body<TargetBody>,
) -> ApiResult<Response> {
    let m = state
        .run(move |p| p.ban_member(caller.user, id, body.user))
        .await?;
    Ok(ok(m))
}

#[derive(Debug, Deserialize)]
pub struct ReportBody {
    pub user: UserId,
    pub reason: String,
}

pub async fn report(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(id): PathArgs<ExperimentId>,
    Body(body): Body<ReportBody>,
) -> ApiResult<Response> {
    let r = state
        .run(move |p| p.report_user(caller.user, id, body.user, &body.reason))
        .await?;
    Ok(created(r))
}

pub async fn reports(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(id): PathArgs<ExperimentId>,
) -> ApiResult<Response> {
    let list = state
        .run(move |p| p.reports(&p.scoped(id, caller.user)?))
        .await?;
    Ok(ok(list))
}

pub async fn resolve_report(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs((id, report)): PathArgs<(ExperimentId, ReportId)>,
) -> ApiResult<Response> {
    let r = state
        .run(move |p| p.resolve_report(caller.user, id, report))
        .await?;
    Ok(ok(r))
}

#[derive(Debug, Deserialize)]
pub struct ExportQuery {
    #[serde(default)]
    pub anonymize: bool,
}

pub async fn export(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(id): PathArgs<ExperimentId>,
    QueryArgs(q): QueryArgs<ExportQuery>,
) -> ApiResult<Response> {
    let zip = state
        .run(move |p| p.export_experiment(caller.user, id, q.anonymize)?.to_zip())
        .await?;
    let suffix = if q.anonymize { "-anonymized" } else { "" };
    let disposition = format!("attachment; filename=\"experiment-{id}{suffix}.zip\"");
    Ok((
        [
            (CONTENT_TYPE, "application/zip".to_string()),
            (CONTENT_DISPOSITION, disposition),
        ],
        zip,
    )
        .into_response())
}
