//! State container, per-experiment partitions and the scope handle through
//! which every experiment-scoped read flows. Export and import live in
//! submodules.

pub mod export;
pub mod import;
pub mod media;
pub mod secrets;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::{Condvar, Mutex, RwLock, RwLockReadGuard, RwLockWriteGuard};
use serde::{Deserialize, Serialize};

use crate::agents::{
    AgentProfile, AgentTask, DiscourseEvent, HttpInference, Inference, InferenceDefaults,
};
use crate::clock::{Clock, SystemClock};
use crate::discourse::{Follow, Like, Post};
use crate::error::{PdsError, Result};
use crate::experiments::permissions::{can, Action, Role};
use crate::experiments::{Experiment, Invitation, Membership, MembershipStatus, UserReport};
use crate::feeds::Notification;
use crate::identity::password::PasswordCost;
use crate::identity::{
    ConsentCatalog, ConsentRecord, PasswordReset, ResearcherRequest, Session, TotpDevice,
    UserAccount,
};
use crate::ids::*;
use crate::live::{EventSink, LiveEvent, NullSink};
use crate::mail::{EmailProvider, MemoryProvider, OutboundEmail};
use crate::moderation::{Flag, LexiconScorer, Moderator};
use media::MediaObject;
use secrets::SecretBox;

/// One experiment's partition of the store.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentData {
    pub experiment: Experiment,
    pub memberships: BTreeMap<UserId, Membership>,
    pub posts: BTreeMap<PostId, Post>,
    /// parent -> direct comments
    pub children: BTreeMap<PostId, Vec<PostId>>,
    /// original -> reposts of it
    pub reposts: BTreeMap<PostId, Vec<PostId>>,
    /// post -> liker -> like
    pub likes: BTreeMap<PostId, BTreeMap<UserId, Like>>,
    /// follower -> followee -> follow
    pub follows: BTreeMap<UserId, BTreeMap<UserId, Follow>>,
    pub reports: BTreeMap<ReportId, UserReport>,
    pub flags: BTreeMap<FlagId, Flag>,
}

impl ExperimentData {
    pub(crate) fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            memberships: BTreeMap::new(),
            posts: BTreeMap::new(),
            children: BTreeMap::new(),
            reposts: BTreeMap::new(),
            likes: BTreeMap::new(),
            follows: BTreeMap::new(),
            reports: BTreeMap::new(),
            flags: BTreeMap::new(),
        }
    }

    pub(crate) fn active_membership(&self, user: UserId) -> Option<&Membership> {
        self.memberships
            .get(&user)
            .filter(|m| m.status == MembershipStatus::Active)
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub(crate) struct State {
    pub ids: IdSequences,
    pub accounts: BTreeMap<UserId, UserAccount>,
    pub handles: BTreeMap<String, UserId>,
    pub emails: BTreeMap<String, UserId>,
    pub consents: Vec<ConsentRecord>,
    pub researcher_requests: BTreeMap<RequestId, ResearcherRequest>,
    pub devices: BTreeMap<DeviceId, TotpDevice>,
    pub sessions: BTreeMap<String, Session>,
    pub reset_tokens: BTreeMap<String, PasswordReset>,
    pub media: BTreeMap<MediaId, MediaObject>,
    pub experiments: BTreeMap<ExperimentId, ExperimentData>,
    pub post_index: BTreeMap<PostId, ExperimentId>,
    pub flag_index: BTreeMap<FlagId, ExperimentId>,
    pub invitations: BTreeMap<String, Invitation>,
    pub notifications: BTreeMap<NotificationId, Notification>,
    pub agents: BTreeMap<UserId, AgentProfile>,
    pub events: BTreeMap<EventId, DiscourseEvent>,
    pub tasks: BTreeMap<TaskId, AgentTask>,
    pub dispatched: BTreeSet<EventId>,
    pub task_queue: VecDeque<TaskId>,
    pub outbox: Vec<OutboundEmail>,
}

/// Proof that a user held an active membership in one experiment when the
/// scope was taken. Experiment-scoped reads take a scope and can only reach
/// that experiment's partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentScope {
    experiment: ExperimentId,
    user: UserId,
    role: Role,
}

impl ExperimentScope {
    pub fn experiment(&self) -> ExperimentId {
        self.experiment
    }

    pub fn user(&self) -> UserId {
        self.user
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn can(&self, action: Action) -> bool {
        can(self.role, action)
    }

    pub(crate) fn authorize(&self, action: Action) -> Result<()> {
        if self.can(action) {
            Ok(())
        } else {
            Err(PdsError::forbidden(Some(self.role), action.as_str()))
        }
    }
}

impl State {
    pub(crate) fn experiment_data(&self, id: ExperimentId) -> Result<&ExperimentData> {
        self.experiments
            .get(&id)
            .ok_or(PdsError::ExperimentNotFound)
    }

    pub(crate) fn experiment_data_mut(&mut self, id: ExperimentId) -> Result<&mut ExperimentData> {
        self.experiments
            .get_mut(&id)
            .ok_or(PdsError::ExperimentNotFound)
    }

    /// The only way to obtain a scope: an active membership.
    pub(crate) fn scope(&self, experiment: ExperimentId, user: UserId) -> Result<ExperimentScope> {
        let data = self.experiment_data(experiment)?;
        let membership = data.active_membership(user).ok_or(PdsError::NotAMember)?;
        Ok(ExperimentScope {
            experiment,
            user,
            role: membership.role,
        })
    }

    pub(crate) fn partition(&self, scope: &ExperimentScope) -> &ExperimentData {
        self.experiments
            .get(&scope.experiment)
            .expect("scoped experiment exists")
    }

    pub(crate) fn partition_mut(&mut self, scope: &ExperimentScope) -> &mut ExperimentData {
        self.experiments
            .get_mut(&scope.experiment)
            .expect("scoped experiment exists")
    }

    pub(crate) fn experiment_of_post(&self, post: PostId) -> Result<ExperimentId> {
        self.post_index
            .get(&post)
            .copied()
            .ok_or(PdsError::PostNotFound)
    }
}

/// Deployment-level settings.
#[derive(Debug, Clone)]
pub struct PlatformConfig {
    /// Used to build links in outbound email.
    pub base_url: String,
    pub consent: ConsentCatalog,
    pub default_inference: Option<InferenceDefaults>,
    pub password_cost: PasswordCost,
    pub invitation_ttl: chrono::Duration,
    pub session_idle: chrono::Duration,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8080".into(),
            consent: ConsentCatalog::default(),
            default_inference: None,
            password_cost: PasswordCost::Standard,
            invitation_ttl: chrono::Duration::days(7),
            session_idle: chrono::Duration::hours(24),
        }
    }
}

pub struct PlatformBuilder {
    config: PlatformConfig,
    clock: Arc<dyn Clock>,
    moderator: Option<Moderator>,
    mailer: Arc<dyn EmailProvider>,
    events: Arc<dyn EventSink>,
    inference: Option<Arc<dyn Inference>>,
    secret_key: String,
    state: Option<State>,
}

impl PlatformBuilder {
    pub fn config(mut self, config: PlatformConfig) -> Self {
        self.config = config;
        self
    }

    pub fn clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn moderator(mut self, moderator: Moderator) -> Self {
        self.moderator = Some(moderator);
        self
    }

    pub fn mailer(mut self, mailer: Arc<dyn EmailProvider>) -> Self {
        self.mailer = mailer;
        self
    }

    pub fn events(mut self, events: Arc<dyn EventSink>) -> Self {
        self.events = events;
        self
    }

    pub fn inference(mut self, inference: Arc<dyn Inference>) -> Self {
        self.inference = Some(inference);
        self
    }

    pub fn secret_key(mut self, key: impl Into<String>) -> Self {
        self.secret_key = key.into();
        self
    }

    /// Starts from a snapshot written by [`Platform::save_snapshot`].
    pub fn snapshot_json(mut self, json: &str) -> Result<Self> {
        let state: State =
            serde_json::from_str(json).map_err(|e| PdsError::Storage(e.to_string()))?;
        self.state = Some(state);
        Ok(self)
    }

    pub fn build(self) -> Platform {
        Platform {
            state: RwLock::new(self.state.unwrap_or_default()),
            clock: self.clock,
            config: self.config,
            moderator: self
                .moderator
                .unwrap_or_else(|| Moderator::new(Arc::new(LexiconScorer::shipped()))),
            mailer: self.mailer,
            events: self.events,
            inference: self
                .inference
                .unwrap_or_else(|| Arc::new(HttpInference::new())),
            secrets: SecretBox::new(&self.secret_key),
            revision: AtomicU64::new(0),
            task_signal: (Mutex::new(()), Condvar::new()),
        }
    }
}

/// The sandbox. All operations are methods on this type, grouped by module.
pub struct Platform {
    pub(crate) state: RwLock<State>,
    pub(crate) clock: Arc<dyn Clock>,
    pub(crate) config: PlatformConfig,
    pub(crate) moderator: Moderator,
    pub(crate) mailer: Arc<dyn EmailProvider>,
    pub(crate) events: Arc<dyn EventSink>,
    pub(crate) inference: Arc<dyn Inference>,
    pub(crate) secrets: SecretBox,
    revision: AtomicU64,
    pub(crate) task_signal: (Mutex<()>, Condvar),
}

impl Platform {
    pub fn builder() -> PlatformBuilder {
        PlatformBuilder {
            config: PlatformConfig::default(),
            clock: Arc::new(SystemClock),
            moderator: None,
            mailer: Arc::new(MemoryProvider::default()),
            events: Arc::new(NullSink),
            inference: None,
            secret_key: "dev-secret".into(),
            state: None,
        }
    }

    pub fn config(&self) -> &PlatformConfig {
        &self.config
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn moderator(&self) -> &Moderator {
        &self.moderator
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    pub(crate) fn read(&self) -> RwLockReadGuard<'_, State> {
        self.state.read()
    }

    /// Write access; every call counts as a state revision.
    pub(crate) fn write(&self) -> RwLockWriteGuard<'_, State> {
        self.revision.fetch_add(1, Ordering::Relaxed);
        self.state.write()
    }

    /// Increases on every mutation. Persistence uses it to skip clean saves.
    pub fn revision(&self) -> u64 {
        self.revision.load(Ordering::Relaxed)
    }

    pub(crate) fn publish(&self, events: Vec<(UserId, LiveEvent)>) {
        for (recipient, event) in events {
            self.events.publish(recipient, event);
        }
    }

    /// Takes a scope for `user` in `experiment`; fails unless the membership is active.
    pub fn scoped(&self, experiment: ExperimentId, user: UserId) -> Result<ExperimentScope> {
        self.read().scope(experiment, user)
    }

    pub fn snapshot_json(&self) -> Result<String> {
        serde_json::to_string(&*self.read()).map_err(|e| PdsError::Storage(e.to_string()))
    }

    /// Writes the whole state atomically (temp file + rename).
    pub fn save_snapshot(&self, path: &Path) -> Result<()> {
        let json = self.snapshot_json()?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, json).map_err(|e| PdsError::Storage(e.to_string()))?;
        std::fs::rename(&tmp, path).map_err(|e| PdsError::Storage(e.to_string()))
    }

    /// Outbound email recorded by the platform, newest last.
    pub fn outbox(&self) -> Vec<OutboundEmail> {
        self.read().outbox.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::Fixture;

    #[test]
    fn scope_requires_active_membership() {
        let f = Fixture::new();
        let owner = f.researcher("owner");
        let exp = f.experiment(owner, "Study");
        let regular = f.member(exp, "reg", Role::Regular);
        let banned = f.member(exp, "ban", Role::Regular);
        let outsider = f.user("out");

        assert_eq!(
            f.platform.scoped(exp, regular).unwrap().role(),
            Role::Regular
        );
        assert_eq!(
            f.platform.scoped(exp, outsider).unwrap_err(),
            PdsError::NotAMember
        );

        f.platform.remove_member(owner, exp, regular).unwrap();
        assert_eq!(
            f.platform.scoped(exp, regular).unwrap_err(),
            PdsError::NotAMember
        );
        f.platform.ban_member(owner, exp, banned).unwrap();
        assert_eq!(
            f.platform.scoped(exp, banned).unwrap_err(),
            PdsError::NotAMember
        );
    }

    #[test]
    fn snapshot_roundtrip_preserves_state() {
        let f = Fixture::new();
        let owner = f.researcher("owner");
        let exp = f.experiment(owner, "Study");
        f.platform.create_post(owner, exp, "hello #world").unwrap();
        let json = f.platform.snapshot_json().unwrap();
        let restored = Platform::builder()
            .clock(f.clock.clone())
            .snapshot_json(&json)
            .unwrap()
            .build();
        let scope = restored.scoped(exp, owner).unwrap();
        let page = restored.explore_feed(&scope, None).unwrap();
        assert_eq!(page.items.len(), 1);
        assert_eq!(restored.snapshot_json().unwrap(), json);
    }
}
