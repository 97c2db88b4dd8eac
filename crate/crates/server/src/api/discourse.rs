//! Posts, interactions, feeds, moderation flags and notifications.

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Extension;
use pds_core::feeds::NotificationFilter;
use pds_core::moderation::{FlagResolution, FlagState};
use pds_core::{ExperimentId, ExperimentScope, FlagId, NotificationId, Platform, PostId, UserId};
use serde::Deserialize;
use serde_json::json;

use super::{created, ok, AppState, Body, Caller, PathArgs, QueryArgs};
use crate::error::ApiResult;

#[derive(Debug, Deserialize)]
pub struct PostBody {
    pub body: String,
}

#[derive(Debug, Default, Deserialize)]
pub struct Page {
    pub cursor: Option<String>,
}

pub async fn create_post(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(id): PathArgs<ExperimentId>,
    Body(body): Body<PostBody>,
) -> ApiResult<Response> {
    let post = state
        .run(move |p| p.create_post(caller.user, id, &body.body))
        .await?;
    Ok(created(post))
}

pub async fn reply(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(parent): PathArgs<PostId>,
    Body(body): Body<PostBody>,
) -> ApiResult<Response> {
    let post = state
        .run(move |p| p.reply(caller.user, parent, &body.body))
        .await?;
    Ok(created(post))
}

pub async fn like(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(post): PathArgs<PostId>,
) -> ApiResult<Response> {
    Ok(ok(state.run(move |p| p.like(caller.user, post)).await?))
}

pub async fn unlike(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(post): PathArgs<PostId>,
) -> ApiResult<Response> {
    state.run(move |p| p.undo_like(caller.user, post)).await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

pub async fn repost(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(post): PathArgs<PostId>,
) -> ApiResult<Response> {
    Ok(created(state.run(move |p| p.repost(caller.user, post)).await?))
}

pub async fn delete_post(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(post): PathArgs<PostId>,
) -> ApiResult<Response> {
    Ok(ok(state.run(move |p| p.delete_post(caller.user, post)).await?))
}

fn post_scope(p: &Platform, user: UserId, post: PostId) -> pds_core::Result<ExperimentScope> {
    p.scoped(p.experiment_of_post(post)?, user)
}

pub async fn thread(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(post): PathArgs<PostId>,
) -> ApiResult<Response> {
    let view = state
        .run(move |p| p.thread(&post_scope(p, caller.user, post)?, post))
        .await?;
    Ok(ok(view))
}

#[derive(Debug, Deserialize)]
pub struct ExperimentQuery {
    pub experiment: ExperimentId,
}

pub async fn follow(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(target): PathArgs<UserId>,
    QueryArgs(q): QueryArgs<ExperimentQuery>,
) -> ApiResult<Response> {
    let f = state
        .run(move |p| p.follow(caller.user, q.experiment, target))
        .await?;
    Ok(ok(f))
}

pub async fn unfollow(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(target): PathArgs<UserId>,
    QueryArgs(q): QueryArgs<ExperimentQuery>,
) -> ApiResult<Response> {
    state
        .run(move |p| p.unfollow(caller.user, q.experiment, target))
        .await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

pub async fn home(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(id): PathArgs<ExperimentId>,
    QueryArgs(page): QueryArgs<Page>,
) -> ApiResult<Response> {
    let feed = state
        .run(move |p| p.home_feed(&p.scoped(id, caller.user)?, page.cursor.as_deref()))
        .await?;
    Ok(ok(feed))
}

pub async fn explore(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(id): PathArgs<ExperimentId>,
    QueryArgs(page): QueryArgs<Page>,
) -> ApiResult<Response> {
    let feed = state
        .run(move |p| p.explore_feed(&p.scoped(id, caller.user)?, page.cursor.as_deref()))
        .await?;
    Ok(ok(feed))
}

pub async fn hashtag(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs((id, tag)): PathArgs<(ExperimentId, String)>,
    QueryArgs(page): QueryArgs<Page>,
) -> ApiResult<Response> {
    let feed = state
        .run(move |p| p.hashtag_feed(&p.scoped(id, caller.user)?, &tag, page.cursor.as_deref()))
        .await?;
    Ok(ok(feed))
}

pub async fn author(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs((id, author)): PathArgs<(ExperimentId, UserId)>,
    QueryArgs(page): QueryArgs<Page>,
) -> ApiResult<Response> {
    let feed = state
        .run(move |p| p.author_feed(&p.scoped(id, caller.user)?, author, page.cursor.as_deref()))
        .await?;
    Ok(ok(feed))
}

#[derive(Debug, Deserialize)]
pub struct SearchQuery {
    #[serde(default)]
    pub q: String,
    pub cursor: Option<String>,
}

pub async fn search(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(id): PathArgs<ExperimentId>,
    QueryArgs(q): QueryArgs<SearchQuery>,
) -> ApiResult<Response> {
    let results = state
        .run(move |p| p.search(&p.scoped(id, caller.user)?, &q.q, q.cursor.as_deref()))
        .await?;
    Ok(ok(results))
}

pub async fn trending(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(id): PathArgs<ExperimentId>,
) -> ApiResult<Response> {
    let tags = state
        .run(move |p| Ok(p.trending(&p.scoped(id, caller.user)?)))
        .await?;
    Ok(ok(tags))
}

#[derive(Debug, Deserialize)]
pub struct ReasonBody {
    pub reason: String,
}

pub async fn flag(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(post): PathArgs<PostId>,
    Body(body): Body<ReasonBody>,
) -> ApiResult<Response> {
    let f = state
        .run(move |p| p.flag_post(caller.user, post, &body.reason))
        .await?;
    Ok(created(f))
}

#[derive(Debug, Deserialize)]
pub struct ResolveBody {
    pub resolution: FlagResolution,
}

pub async fn resolve_flag(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(flag): PathArgs<FlagId>,
    Body(body): Body<ResolveBody>,
) -> ApiResult<Response> {
    let f = state
        .run(move |p| p.resolve_flag(caller.user, flag, body.resolution))
        .await?;
    Ok(ok(f))
}

#[derive(Debug, Deserialize)]
pub struct FlagQuery {
    pub state: Option<FlagState>,
}

pub async fn flags(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(id): PathArgs<ExperimentId>,
    QueryArgs(q): QueryArgs<FlagQuery>,
) -> ApiResult<Response> {
    let list = state
        .run(move |p| p.flags(&p.scoped(id, caller.user)?, q.state))
        .await?;
    Ok(ok(list))
}

#[derive(Debug, Deserialize)]
pub struct NotificationQuery {
    pub filter: Option<String>,
    pub cursor: Option<String>,
}

pub async fn notifications(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    QueryArgs(q): QueryArgs<NotificationQuery>,
) -> ApiResult<Response> {
    let page = state
        .run(move |p| {
            let filter = match q.filter.as_deref() {
                None => NotificationFilter::All,
                Some(f) => f.parse()?,
            };
            p.notifications(caller.user, filter, q.cursor.as_deref())
        })
        .await?;
    Ok(ok(page))
}

#[derive(Debug, Default, Deserialize)]
pub struct SeenBody {
    /// Marks this notification and everything older; all when absent.
    pub up_to: Option<NotificationId>,
}

pub async fn mark_seen(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    Body(body): Body<SeenBody>,
) -> ApiResult<Response> {
    let (marked, unseen) = state
        .run(move |p| {
            let marked = p.mark_seen(caller.user, body.up_to);
            Ok((marked, p.unseen_count(caller.user)))
        })
        .await?;
    Ok(ok(json!({ "marked": marked, "unseen_count": unseen })))
}
