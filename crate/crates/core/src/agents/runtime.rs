//! Executes agent tasks: one bounded turn per task.

use std::time::Duration;

use super::inference::InferenceRequest;
use super::prompt::{self, ContextPost};
use super::{
    parse_decision, ActionTaken, AgentAction, AgentProfile, AgentTask, Decision, InferenceError,
    TaskState, MAX_ATTEMPTS,
};
use crate::discourse::{screen_body, Committed};
use crate::error::{PdsError, Result};
use crate::ids::TaskId;
use crate::store::{Platform, State};
use crate::text::{scalar_len, truncate_scalars, MAX_POST_CHARS};

/// Backoff before retry `n` (1-based): 2, 4, 8 seconds.
pub fn backoff(retry: u32) -> Duration {
    Duration::from_secs(1 << retry)
}

struct TurnInput {
    profile: AgentProfile,
    handle: String,
    payload: prompt::PromptPayload,
}

impl State {
    fn finish(
        &mut self,
        task: TaskId,
        state: TaskState,
        note: Option<String>,
        now: chrono::DateTime<chrono::Utc>,
    ) -> AgentTask {
        let t = self.tasks.get_mut(&task).expect("task exists");
        t.state = state;
        t.finished_at = Some(now);
        t.notes.extend(note);
        t.clone()
    }

    fn turn_input(&self, task: &AgentTask) -> std::result::Result<TurnInput, &'static str> {
        let profile = self.agents.get(&task.agent).ok_or("agent_missing")?.clone();
        if !profile.active {
            return Err("agent_inactive");
        }
        let data = self
            .experiments
            .get(&task.experiment)
            .ok_or("experiment_missing")?;
        if data.active_membership(task.agent).is_none() {
            return Err("agent_not_member");
        }
        let post = data.posts.get(&task.post).ok_or("post_missing")?;
        if !data.is_visible(post) {
            return Err("post_unavailable");
        }
        let thread = data
            .ancestry(task.post)
            .into_iter()
            .filter_map(|id| data.posts.get(&id))
            .map(|p| ContextPost {
                post: p.id,
                author: p.author,
                author_handle: self.handle_of(p.author).to_string(),
                body: p.body.clone(),
                own: p.author == task.agent,
            })
            .collect();
        let enabled: Vec<&str> = profile.actions_enabled.iter().map(|a| a.as_str()).collect();
        let payload = prompt::build(&profile.persona_prompt, thread, &enabled);
        Ok(TurnInput {
            handle: self.handle_of(task.agent).to_string(),
            profile,
            payload,
        })
    }
}

impl Platform {
    /// Runs one queued task to a terminal state. A task that is not queued
    /// is returned unchanged, so each task runs at most once.
    pub fn run_turn(&self, task: TaskId) -> Result<AgentTask> {
        let (current, input) = {
            let mut st = self.write();
            let t = st.tasks.get_mut(&task).ok_or(PdsError::TaskNotFound)?;
            if t.state != TaskState::Queued {
                return Ok(t.clone());
            }
            t.state = TaskState::Running;
            let current = t.clone();
            let input = st.turn_input(&current);
            (current, input)
        };
        let input = match input {
            Ok(i) => i,
            Err(reason) => {
                let now = self.now();
                return Ok(self
                    .write()
                    .finish(task, TaskState::Skipped, Some(reason.into()), now));
            }
        };

        let request = match self.inference_request(&input) {
            Ok(r) => r,
            Err(e) => {
                let now = self.now();
                return Ok(self.write().finish(
                    task,
                    TaskState::Failed,
                    Some(e.code().into()),
                    now,
                ));
            }
        };
        let mut attempt = 0;
        let raw = loop {
            attempt += 1;
            if let Some(t) = self.write().tasks.get_mut(&task) {
                t.attempts = attempt;
            }
            match self.inference.complete(&request) {
                Ok(text) => break text,
                Err(e) if e.is_retryable() && attempt < MAX_ATTEMPTS => {
                    tracing::debug!(%task, attempt, error = %e, "retrying inference");
                    self.clock.sleep(backoff(attempt));
                }
                Err(e) => {
                    tracing::warn!(%task, attempt, error = %e, "inference failed");
                    let now = self.now();
                    let note = match &e {
                        InferenceError::Http(status) => format!("{}:{status}", e.code()),
                        _ => e.code().to_string(),
                    };
                    return Ok(self
                        .write()
                        .finish(task, TaskState::Failed, Some(note), now));
                }
            }
        };

        let mut decision = parse_decision(&raw);
        decision
            .actions
            .retain(|a| input.profile.actions_enabled.contains(a));
        let done = self.apply_decision(&current, &input.profile, decision)?;
        Ok(done)
    }

    fn inference_request(
        &self,
        input: &TurnInput,
    ) -> std::result::Result<InferenceRequest, InferenceError> {
        let defaults = self.config.default_inference.as_ref();
        let endpoint = input
            .profile
            .endpoint_url
            .clone()
            .or_else(|| defaults.map(|d| d.endpoint.clone()))
            .ok_or(InferenceError::NotConfigured)?;
        let model = input
            .profile
            .model_name
            .clone()
            .or_else(|| defaults.map(|d| d.model.clone()))
            .unwrap_or_else(|| "default".into());
        let api_key = match &input.profile.api_key {
            Some(sealed) => Some(
                self.secrets
                    .open(sealed)
                    .map_err(|_| InferenceError::NotConfigured)?,
            ),
            None if input.profile.endpoint_url.is_none() => {
                defaults.and_then(|d| d.api_key.clone())
            }
            None => None,
        };
        Ok(InferenceRequest {
            endpoint,
            model,
            api_key,
            agent_handle: input.handle.clone(),
            messages: input.payload.messages(),
            max_tokens: super::inference::DEFAULT_MAX_TOKENS,
        })
    }

    fn apply_decision(
        &self,
        task: &AgentTask,
        profile: &AgentProfile,
        decision: Decision,
    ) -> Result<AgentTask> {
        let mut notes = Vec::new();
        // screening happens outside the lock, like any other post
        let reply = match (
            &decision.reply_text,
            decision.actions.contains(&AgentAction::Reply),
        ) {
            (Some(text), true) => {
                let text = if scalar_len(text) > MAX_POST_CHARS {
                    notes.push(format!("reply_truncated:{}", scalar_len(text)));
                    truncate_scalars(text, MAX_POST_CHARS).to_string()
                } else {
                    text.clone()
                };
                match screen_body(self, &text) {
                    Ok(version) => Some((text, version)),
                    Err(e) => {
                        notes.push(format!("reply_dropped:{}", e.code()));
                        None
                    }
                }
            }
            _ => None,
        };

        let now = self.now();
        let mut out = Committed::default();
        let finished = {
            let mut st = self.write();
            let live = st.agents.get(&profile.id).cloned();
            let Some(live) = live.filter(|a| a.active) else {
                return Ok(st.finish(
                    task.id,
                    TaskState::Skipped,
                    Some("agent_inactive".into()),
                    now,
                ));
            };
            let wants_action = !decision.actions.is_empty();
            if wants_action && st.rate_limited(&live, now) {
                return Ok(st.finish(
                    task.id,
                    TaskState::Skipped,
                    Some("rate_limited".into()),
                    now,
                ));
            }
            let Ok(scope) = st.scope(task.experiment, profile.id) else {
                return Ok(st.finish(
                    task.id,
                    TaskState::Skipped,
                    Some("agent_not_member".into()),
                    now,
                ));
            };
            let mut taken = Vec::new();
            for action in &decision.actions {
                let result = match action {
                    AgentAction::Like => st
                        .like_locked(&scope, task.post, now, &mut out)
                        .map(|_| ActionTaken::Like(task.post)),
                    AgentAction::Repost => st
                        .repost_locked(&scope, task.post, now, &mut out)
                        .map(|p| ActionTaken::Repost(p.id)),
                    AgentAction::Reply => {
                        let Some((text, version)) = reply.clone() else {
                            continue;
                        };
                        let data = st.partition(&scope);
                        let depth = data
                            .posts
                            .get(&task.post)
                            .map(|p| data.depth(p))
                            .unwrap_or(0);
                        if depth + 1 > live.max_thread_depth {
                            notes.push("thread_depth_limit".into());
                            continue;
                        }
                        st.reply_locked(&scope, task.post, text, version, now, &mut out)
                            .map(|p| ActionTaken::Reply(p.id))
                    }
                };
                match result {
                    Ok(t) => taken.push(t),
                    Err(e) => notes.push(format!("{}_failed:{}", action.as_str(), e.code())),
                }
            }
            if !taken.is_empty() {
                if let Some(a) = st.agents.get_mut(&profile.id) {
                    a.last_action_at = Some(now);
                }
            }
            let t = st.tasks.get_mut(&task.id).expect("task exists");
            t.actions_taken = taken;
            t.notes.extend(notes);
            st.finish(task.id, TaskState::Done, None, now)
        };
        self.after_commit(out);
        Ok(finished)
    }

    /// Pops the oldest queued task, if any.
    pub fn take_queued_task(&self) -> Option<TaskId> {
        self.write().task_queue.pop_front()
    }

    /// Waits up to `timeout` for a queued task. For worker threads.
    pub fn next_task(&self, timeout: Duration) -> Option<TaskId> {
        if let Some(t) = self.take_queued_task() {
            return Some(t);
        }
        let mut guard = self.task_signal.0.lock();
        if self.read().task_queue.is_empty() {
            self.task_signal.1.wait_for(&mut guard, timeout);
        }
        drop(guard);
        self.take_queued_task()
    }

    /// Wakes workers blocked in [`Platform::next_task`].
    pub fn wake_workers(&self) {
        // taking the mutex orders this after a waiter's queue check
        let _guard = self.task_signal.0.lock();
        self.task_signal.1.notify_all();
    }

    /// Runs queued tasks one at a time, oldest first, including tasks
    /// queued by the turns themselves. Returns how many ran.
    pub fn drain_tasks(&self) -> usize {
        let mut ran = 0;
        while let Some(task) = self.take_queued_task() {
            if let Err(e) = self.run_turn(task) {
                tracing::warn!(%task, error = %e, "task could not run");
            }
            ran += 1;
        }
        ran
    }
}
