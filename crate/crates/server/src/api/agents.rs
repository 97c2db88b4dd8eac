use std::collections::BTreeSet;

use axum::extract::State;
use axum::response::Response;
use axum::Extension;
use pds_core::agents::{AgentAction, AgentPatch, NewAgent, TriggerPolicy};
use pds_core::{ExperimentId, UserId};
use serde::{Deserialize, Deserializer};

use super::{created, ok, AppState, Body, Caller, PathArgs};
use crate::error::ApiResult;

#[derive(Debug, Deserialize)]
pub struct RegisterBody {
    pub handle: String,
    pub display_name: Option<String>,
    #[serde(default)]
    pub bio: String,
    pub persona_prompt: String,
    pub endpoint_url: Option<String>,
    pub model_name: Option<String>,
    pub api_key: Option<String>,
    pub trigger_policy: Option<TriggerPolicy>,
    pub actions_enabled: Option<BTreeSet<AgentAction>>,
    pub max_thread_depth: Option<u32>,
    pub min_seconds_between_actions: Option<u32>,
}

pub async fn register(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(id): PathArgs<ExperimentId>,
    Body(body): Body<RegisterBody>,
) -> ApiResult<Response> {
    let mut new = NewAgent::new(&body.handle, &body.persona_prompt);
    if let Some(name) = body.display_name {
        new.display_name = name;
    }
    new.bio = body.bio;
    new.endpoint_url = body.endpoint_url;
    new.model_name = body.model_name;
    new.api_key = body.api_key;
    if let Some(t) = body.trigger_policy {
        new.trigger_policy = t;
    }
    if let Some(a) = body.actions_enabled {
        new.actions_enabled = a;
    }
    if let Some(d) = body.max_thread_depth {
        new.max_thread_depth = d;
    }
    if let Some(s) = body.min_seconds_between_actions {
        new.min_seconds_between_actions = s;
    }
    let view = state
        .run(move |p| p.register_agent(caller.user, id, new))
        .await?;
    Ok(created(view))
}

/// Tells "absent" (leave alone) apart from `null` (clear).
fn present<'de, D, T>(d: D) -> Result<Option<Option<T>>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    Option::<T>::deserialize(d).map(Some)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchBody {
    pub display_name: Option<String>,
    pub bio: Option<String>,
    pub persona_prompt: Option<String>,
    #[serde(default, deserialize_with = "present")]
    pub endpoint_url: Option<Option<String>>,
    #[serde(default, deserialize_with = "present")]
    pub model_name: Option<Option<String>>,
    #[serde(default, deserialize_with = "present")]
    pub api_key: Option<Option<String>>,
    pub trigger_policy: Option<TriggerPolicy>,
    pub actions_enabled: Option<BTreeSet<AgentAction>>,
    pub max_thread_depth: Option<u32>,
    pub min_seconds_between_actions: Option<u32>,
    pub active: Option<bool>,
}

pub async fn update(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(agent): PathArgs<UserId>,
    Body(b): Body<PatchBody>,
) -> ApiResult<Response> {
    let patch = AgentPatch {
        display_name: b.display_name,
        bio: b.bio,
        persona_prompt: b.persona_prompt,
        endpoint_url: b.endpoint_url,
        model_name: b.model_name,
        api_key: b.api_key,
        trigger_policy: b.trigger_policy,
        actions_enabled: b.actions_enabled,
        max_thread_depth: b.max_thread_depth,
        min_seconds_between_actions: b.min_seconds_between_actions,
        active: b.active,
    };
    let view = state
        .run(move |p| p.update_agent(caller.user, agent, patch))
        .await?;
    Ok(ok(view))
}

pub async fn list(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(id): PathArgs<ExperimentId>,
) -> ApiResult<Response> {
    let agents = state
        .run(move |p| p.agents(&p.scoped(id, caller.user)?))
        .await?;
    Ok(ok(agents))
}

pub async fn show(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(agent): PathArgs<UserId>,
) -> ApiResult<Response> {
    Ok(ok(state.run(move |p| p.agent(caller.user, agent)).await?))
}

pub async fn tasks(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(agent): PathArgs<UserId>,
) -> ApiResult<Response> {
    Ok(ok(state.run(move |p| p.agent_tasks(caller.user, agent)).await?))
}
