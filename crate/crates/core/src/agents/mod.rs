//! AI accounts: registry, event dispatch and the per-task turn runtime.

pub mod decision;
pub mod inference;
pub mod prompt;
mod runtime;

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use url::Url;

use crate::error::{PdsError, Result};
use crate::experiments::permissions::Role;
use crate::experiments::{validate_text, Membership, MembershipStatus};
use crate::identity::{normalize_handle, AccountKind, AccountStatus, UserAccount};
use crate::ids::{EventId, ExperimentId, PostId, TaskId, UserId};
use crate::store::secrets::SealedSecret;
use crate::store::{ExperimentScope, Platform, State};
use crate::text::scalar_len;

pub use decision::{parse_decision, Decision};
pub use inference::{HttpInference, Inference, InferenceError, Script, ScriptedInference};
pub use prompt::PromptPayload;

pub const MAX_PERSONA_CHARS: usize = 8000;
pub const DEFAULT_MAX_THREAD_DEPTH: u32 = 4;
pub const DEFAULT_MIN_SECONDS_BETWEEN_ACTIONS: u32 = 30;
pub const MAX_ATTEMPTS: u32 = 3;

/// Deployment-wide inference settings used by agents without their own endpoint.
#[derive(Debug, Clone)]
pub struct InferenceDefaults {
    pub endpoint: Url,
    pub model: String,
    pub api_key: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerPolicy {
    #[default]
    AllPosts,
    RepliesToSelfThread,
    MentionsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentAction {
    Like,
    Repost,
    Reply,
}

impl AgentAction {
    pub const ALL: [AgentAction; 3] = [AgentAction::Like, AgentAction::Repost, AgentAction::Reply];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentAction::Like => "like",
            AgentAction::Repost => "repost",
            AgentAction::Reply => "reply",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    /// The agent's account id.
    pub id: UserId,
    pub experiment: ExperimentId,
    pub persona_prompt: String,
    pub endpoint_url: Option<Url>,
    pub model_name: Option<String>,
    pub api_key: Option<SealedSecret>,
    pub trigger_policy: TriggerPolicy,
    pub actions_enabled: BTreeSet<AgentAction>,
    pub max_thread_depth: u32,
    pub min_seconds_between_actions: u32,
    pub active: bool,
    pub created_by: UserId,
    pub created_at: DateTime<Utc>,
    pub last_action_at: Option<DateTime<Utc>>,
}

/// An agent as shown to staff: profile without the key.
#[derive(Debug, Clone, Serialize)]
pub struct AgentView {
    pub id: UserId,
    pub handle: String,
    pub display_name: String,
    pub bio: String,
    pub experiment: ExperimentId,
    pub persona_prompt: String,
    pub endpoint_url: Option<Url>,
    pub model_name: Option<String>,
    pub has_api_key: bool,
    pub trigger_policy: TriggerPolicy,
    pub actions_enabled: BTreeSet<AgentAction>,
    pub max_thread_depth: u32,
    pub min_seconds_between_actions: u32,
    pub active: bool,
    pub created_at: DateTime<Utc>,
    pub last_action_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    NewPost,
    NewReply,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscourseEvent {
    pub id: EventId,
    pub experiment: ExperimentId,
    pub kind: EventKind,
    pub post: PostId,
    pub author: UserId,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Queued,
    Running,
    Done,
    Failed,
    Skipped,
}

impl TaskState {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            TaskState::Done | TaskState::Failed | TaskState::Skipped
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", content = "post", rename_all = "snake_case")]
pub enum ActionTaken {
    Like(PostId),
    Repost(PostId),
    Reply(PostId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTask {
    pub id: TaskId,
    pub event: EventId,
    pub agent: UserId,
    pub experiment: ExperimentId,
    pub post: PostId,
    pub state: TaskState,
    pub attempts: u32,
    pub actions_taken: Vec<ActionTaken>,
    /// Why the task was skipped or failed, and anything adjusted on the way.
    pub notes: Vec<String>,
    pub created_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone)]
pub struct NewAgent {
    pub handle: String,
    pub display_name: String,
    pub bio: String,
    pub persona_prompt: String,
    pub endpoint_url: Option<String>,
    pub model_name: Option<String>,
    pub api_key: Option<String>,
    pub trigger_policy: TriggerPolicy,
    pub actions_enabled: BTreeSet<AgentAction>,
    pub max_thread_depth: u32,
    pub min_seconds_between_actions: u32,
}

impl NewAgent {
    /// An agent with default limits, all actions and the `all_posts` policy.
    pub fn new(handle: &str, persona: &str) -> Self {
        Self {
            handle: handle.into(),
            display_name: handle.into(),
            bio: String::new(),
            persona_prompt: persona.into(),
            endpoint_url: None,
            model_name: None,
            api_key: None,
            trigger_policy: TriggerPolicy::AllPosts,
            actions_enabled: AgentAction::ALL.into_iter().collect(),
            max_thread_depth: DEFAULT_MAX_THREAD_DEPTH,
            min_seconds_between_actions: DEFAULT_MIN_SECONDS_BETWEEN_ACTIONS,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AgentPatch {
    pub display_name: Option<String>,
    pub bio: Option<String>,
    pub persona_prompt: Option<String>,
    /// `Some(None)` clears the endpoint so the deployment default applies.
    pub endpoint_url: Option<Option<String>>,
    pub model_name: Option<Option<String>>,
    pub api_key: Option<Option<String>>,
    pub trigger_policy: Option<TriggerPolicy>,
    pub actions_enabled: Option<BTreeSet<AgentAction>>,
    pub max_thread_depth: Option<u32>,
    pub min_seconds_between_actions: Option<u32>,
    pub active: Option<bool>,
}

fn parse_endpoint(raw: &str) -> Result<Url> {
    let url = Url::parse(raw.trim()).map_err(|e| PdsError::InvalidEndpoint(e.to_string()))?;
    if !matches!(url.scheme(), "http" | "https") || url.host_str().is_none() {
        return Err(PdsError::InvalidEndpoint(
            "endpoint must be an http(s) URL".into(),
        ));
    }
    Ok(url)
}

fn validate_persona(persona: &str) -> Result<()> {
    validate_text("persona_prompt", persona, MAX_PERSONA_CHARS)
}

/// True when `body` mentions `@handle` as a whole word.
pub fn mentions(body: &str, handle: &str) -> bool {
    let body = body.to_lowercase();
    let needle = format!("@{}", handle.to_lowercase());
    body.match_indices(&needle).any(|(i, _)| {
        let before_ok = body[..i]
            .chars()
            .next_back()
            .is_none_or(|c| !(c.is_alphanumeric() || c == '_'));
        let after_ok = body[i + needle.len()..]
            .chars()
            .next()
            .is_none_or(|c| !(c.is_alphanumeric() || c == '_'));
        before_ok && after_ok
    })
}

impl State {
    pub(crate) fn agent_view(&self, profile: &AgentProfile) -> AgentView {
        let account = &self.accounts[&profile.id];
        AgentView {
            id: profile.id,
            handle: account.handle.clone(),
            display_name: account.display_name.clone(),
            bio: account.bio.clone(),
            experiment: profile.experiment,
            persona_prompt: profile.persona_prompt.clone(),
            endpoint_url: profile.endpoint_url.clone(),
            model_name: profile.model_name.clone(),
            has_api_key: profile.api_key.is_some(),
            trigger_policy: profile.trigger_policy,
            actions_enabled: profile.actions_enabled.clone(),
            max_thread_depth: profile.max_thread_depth,
            min_seconds_between_actions: profile.min_seconds_between_actions,
            active: profile.active,
            created_at: profile.created_at,
            last_action_at: profile.last_action_at,
        }
    }

    /// Staff scope in the agent's experiment.
    fn agent_staff_scope(&self, actor: UserId, agent: UserId) -> Result<ExperimentScope> {
        let profile = self.agents.get(&agent).ok_or(PdsError::AgentNotFound)?;
        let scope = self.scope(profile.experiment, actor)?;
        if !scope.role().is_staff() {
            return Err(PdsError::forbidden(Some(scope.role()), "manage_agents"));
        }
        Ok(scope)
    }

    fn rate_limited(&self, agent: &AgentProfile, now: DateTime<Utc>) -> bool {
        agent.last_action_at.is_some_and(|last| {
            now - last < chrono::Duration::seconds(agent.min_seconds_between_actions.into())
        })
    }

    fn policy_matches(&self, agent: &AgentProfile, event: &DiscourseEvent) -> bool {
        let Some(data) = self.experiments.get(&event.experiment) else {
            return false;
        };
        let Some(post) = data.posts.get(&event.post) else {
            return false;
        };
        match agent.trigger_policy {
            TriggerPolicy::AllPosts => true,
            TriggerPolicy::MentionsOnly => mentions(&post.body, self.handle_of(agent.id)),
            TriggerPolicy::RepliesToSelfThread => {
                event.kind == EventKind::NewReply
                    && data
                        .ancestry(event.post)
                        .iter()
                        .filter(|id| **id != event.post)
                        .any(|id| data.posts.get(id).is_some_and(|p| p.author == agent.id))
            }
        }
    }

    fn push_task(
        &mut self,
        event: &DiscourseEvent,
        agent: UserId,
        state: TaskState,
        note: Option<&str>,
        now: DateTime<Utc>,
    ) -> TaskId {
        let id = self.ids.next_task();
        self.tasks.insert(
            id,
            AgentTask {
                id,
                event: event.id,
                agent,
                experiment: event.experiment,
                post: event.post,
                state,
                attempts: 0,
                actions_taken: Vec::new(),
                notes: note.map(|n| vec![n.to_string()]).unwrap_or_default(),
                created_at: now,
                finished_at: (state != TaskState::Queued).then_some(now),
            },
        );
        if state == TaskState::Queued {
            self.task_queue.push_back(id);
        }
        id
    }
}

impl Platform {
    /// Creates an agent account and its profile inside one experiment.
    pub fn register_agent(
        &self,
        researcher: UserId,
        experiment: ExperimentId,
        new: NewAgent,
    ) -> Result<AgentView> {
        let handle = normalize_handle(&new.handle)?;
        validate_text(
            "display_name",
            &new.display_name,
            crate::identity::MAX_DISPLAY_NAME_CHARS,
        )?;
        if scalar_len(&new.bio) > crate::identity::MAX_BIO_CHARS {
            return Err(PdsError::FieldTooLong {
                field: "bio",
                max: crate::identity::MAX_BIO_CHARS,
            });
        }
        validate_persona(&new.persona_prompt)?;
        let endpoint = new
            .endpoint_url
            .as_deref()
            .map(parse_endpoint)
            .transpose()?;
        let api_key = new
            .api_key
            .as_deref()
            .filter(|k| !k.is_empty())
            .map(|k| self.secrets.seal(k));
        let now = self.now();
        let mut st = self.write();
        if st.account(researcher)?.kind != AccountKind::Researcher {
            return Err(PdsError::NotResearcher);
        }
        let scope = st.scope(experiment, researcher)?;
        if !scope.role().is_staff() {
            return Err(PdsError::forbidden(Some(scope.role()), "register_agent"));
        }
        let id = st.insert_account(UserAccount {
            id: UserId(0),
            handle,
            email: None,
            password_digest: None,
            kind: AccountKind::Regular,
            is_admin: false,
            is_agent: true,
            display_name: new.display_name.trim().to_string(),
            bio: new.bio,
            profile_photo: None,
            banner_photo: None,
            created_at: now,
            status: AccountStatus::Active,
        })?;
        st.partition_mut(&scope).memberships.insert(
            id,
            Membership {
                user: id,
                experiment,
                role: Role::Regular,
                status: MembershipStatus::Active,
                invited_by: researcher,
                joined_at: Some(now),
            },
        );
        let profile = AgentProfile {
            id,
            experiment,
            persona_prompt: new.persona_prompt,
            endpoint_url: endpoint,
            model_name: new.model_name.filter(|m| !m.trim().is_empty()),
            api_key,
            trigger_policy: new.trigger_policy,
            actions_enabled: new.actions_enabled,
            max_thread_depth: new.max_thread_depth,
            min_seconds_between_actions: new.min_seconds_between_actions,
            active: true,
            created_by: researcher,
            created_at: now,
            last_action_at: None,
        };
        let view = {
            st.agents.insert(id, profile);
            st.agent_view(&st.agents[&id])
        };
        Ok(view)
    }

    pub fn update_agent(
        &self,
        actor: UserId,
        agent: UserId,
        patch: AgentPatch,
    ) -> Result<AgentView> {
        if let Some(p) = &patch.persona_prompt {
            validate_persona(p)?;
        }
        if let Some(name) = &patch.display_name {
            validate_text(
                "display_name",
                name,
                crate::identity::MAX_DISPLAY_NAME_CHARS,
            )?;
        }
        if let Some(bio) = &patch.bio {
            if scalar_len(bio) > crate::identity::MAX_BIO_CHARS {
                return Err(PdsError::FieldTooLong {
                    field: "bio",
                    max: crate::identity::MAX_BIO_CHARS,
                });
            }
        }
        let endpoint = patch
            .endpoint_url
            .map(|e| e.as_deref().map(parse_endpoint).transpose())
            .transpose()?;
        let api_key = patch
            .api_key
            .map(|k| k.filter(|k| !k.is_empty()).map(|k| self.secrets.seal(&k)));
        let mut st = self.write();
        let scope = st.agent_staff_scope(actor, agent)?;
        if patch.active == Some(true) && st.partition(&scope).active_membership(agent).is_none() {
            return Err(PdsError::NotAMember);
        }
        if let Some(account) = st.accounts.get_mut(&agent) {
            if let Some(name) = patch.display_name {
                account.display_name = name.trim().to_string();
            }
            if let Some(bio) = patch.bio {
                account.bio = bio;
            }
        }
        let profile = st.agents.get_mut(&agent).expect("checked above");
        if let Some(p) = patch.persona_prompt {
            profile.persona_prompt = p;
        }
        if let Some(e) = endpoint {
            profile.endpoint_url = e;
        }
        if let Some(m) = patch.model_name {
            profile.model_name = m.filter(|m| !m.trim().is_empty());
        }
        if let Some(k) = api_key {
            profile.api_key = k;
        }
        if let Some(t) = patch.trigger_policy {
            profile.trigger_policy = t;
        }
        if let Some(a) = patch.actions_enabled {
            profile.actions_enabled = a;
        }
        if let Some(d) = patch.max_thread_depth {
            profile.max_thread_depth = d;
        }
        if let Some(s) = patch.min_seconds_between_actions {
            profile.min_seconds_between_actions = s;
        }
        if let Some(a) = patch.active {
            profile.active = a;
        }
        let profile = profile.clone();
        Ok(st.agent_view(&profile))
    }

    pub fn agent(&self, actor: UserId, agent: UserId) -> Result<AgentView> {
        let st = self.read();
        st.agent_staff_scope(actor, agent)?;
        Ok(st.agent_view(&st.agents[&agent]))
    }

    /// Agents of the experiment. Staff only.
    pub fn agents(&self, scope: &ExperimentScope) -> Result<Vec<AgentView>> {
        if !scope.role().is_staff() {
            return Err(PdsError::forbidden(Some(scope.role()), "manage_agents"));
        }
        let st = self.read();
        Ok(st
            .agents
            .values()
            .filter(|a| a.experiment == scope.experiment())
            .map(|a| st.agent_view(a))
            .collect())
    }

    /// Tasks of one agent, newest first. Staff only.
    pub fn agent_tasks(&self, actor: UserId, agent: UserId) -> Result<Vec<AgentTask>> {
        let st = self.read();
        st.agent_staff_scope(actor, agent)?;
        Ok(st
            .tasks
            .values()
            .rev()
            .filter(|t| t.agent == agent)
            .cloned()
            .collect())
    }

    pub fn task(&self, task: TaskId) -> Result<AgentTask> {
        self.read()
            .tasks
            .get(&task)
            .cloned()
            .ok_or(PdsError::TaskNotFound)
    }

    /// All tasks created for one discourse event, in creation order.
    pub fn tasks_for_event(&self, event: EventId) -> Vec<AgentTask> {
        self.read()
            .tasks
            .values()
            .filter(|t| t.event == event)
            .cloned()
            .collect()
    }

    /// Every discourse event so far, oldest first.
    pub fn events(&self) -> Vec<DiscourseEvent> {
        self.read().events.values().cloned().collect()
    }

    /// Fans one committed event out to the experiment's agents. Agents that
    /// are inactive, wrote the post, or whose policy does not match get
    /// nothing; agents blocked by the depth or rate limit get a skipped task.
    pub(crate) fn dispatch(&self, event: EventId) -> Vec<TaskId> {
        let now = self.now();
        let created = {
            let mut st = self.write();
            let Some(event) = st.events.get(&event).cloned() else {
                return Vec::new();
            };
            if !st.dispatched.insert(event.id) {
                return Vec::new();
            }
            let Some(data) = st.experiments.get(&event.experiment) else {
                return Vec::new();
            };
            let Some(post) = data.posts.get(&event.post) else {
                return Vec::new();
            };
            let depth = data.depth(post);
            let candidates: Vec<AgentProfile> = st
                .agents
                .values()
                .filter(|a| a.experiment == event.experiment && a.active && a.id != event.author)
                .filter(|a| data.active_membership(a.id).is_some())
                .cloned()
                .collect();
            let mut created = Vec::new();
            for agent in candidates {
                if !st.policy_matches(&agent, &event) {
                    continue;
                }
                let (state, note) = if depth + 1 > agent.max_thread_depth {
                    (TaskState::Skipped, Some("thread_depth_limit"))
                } else if st.rate_limited(&agent, now) {
                    (TaskState::Skipped, Some("rate_limited"))
                } else {
                    (TaskState::Queued, None)
                };
                created.push(st.push_task(&event, agent.id, state, note, now));
            }
            created
        };
        if !created.is_empty() {
            self.wake_workers();
        }
        created
    }
}
