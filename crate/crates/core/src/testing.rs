//! Test support shared by unit tests, integration tests and the server
//! test suites. Builds a platform on a manual clock with in-memory mail,
//! recorded live events and scripted inference.

use std::sync::Arc;

use crate::agents::{NewAgent, Script, ScriptedInference};
use crate::clock::ManualClock;
use crate::experiments::permissions::Role;
use crate::experiments::{Membership, MembershipStatus, NewExperiment, Visibility};
use crate::identity::password::PasswordCost;
use crate::identity::{totp, AccountKind, ConsentCatalog, ConsentKind, Registration};
use crate::ids::{EventId, ExperimentId, PostId, UserId};
use crate::agents::inference::Inference;
use crate::live::{EventSink, LiveEvent, RecordingSink};
use crate::mail::MemoryProvider;
use crate::moderation::Moderator;
use crate::store::media::MediaUpload;
use crate::store::{Platform, PlatformConfig};

pub const PASSWORD: &str = "correct-horse-9";
pub const STUB_ENDPOINT: &str = "http://stub.invalid/v1";

/// A registration for `handle` with email `{handle}@example.org`.
pub fn reg(handle: &str) -> Registration {
    Registration {
        handle: handle.into(),
        email: format!("{handle}@example.org"),
        password: PASSWORD.into(),
        display_name: capitalize(handle),
        consents: ConsentKind::REQUIRED.to_vec(),
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    chars
        .next()
        .map(|c| c.to_uppercase().chain(chars).collect())
        .unwrap_or_default()
}

/// A minimal valid PDF upload.
pub fn pdf() -> MediaUpload {
    MediaUpload::new("application/pdf", b"%PDF-1.4\n%%EOF\n".to_vec())
}

pub fn fast_config() -> PlatformConfig {
    PlatformConfig {
        password_cost: PasswordCost::Fast,
        ..PlatformConfig::default()
    }
}

/// Records, then hands the event on to `next`.
struct Tee {
    record: Arc<RecordingSink>,
    next: Arc<dyn EventSink>,
}

impl EventSink for Tee {
    fn publish(&self, recipient: UserId, event: LiveEvent) {
        self.record.publish(recipient, event.clone());
        self.next.publish(recipient, event);
    }
}

/// Overrides for [`Fixture::with_parts`].
#[derive(Default)]
pub struct Parts {
    pub config: Option<PlatformConfig>,
    pub script: Script,
    pub inference: Option<Arc<dyn Inference>>,
    pub sink: Option<Arc<dyn EventSink>>,
}

pub struct Fixture {
    pub platform: Arc<Platform>,
    pub clock: Arc<ManualClock>,
    pub mail: Arc<MemoryProvider>,
    pub events: Arc<RecordingSink>,
    pub scripted: Arc<ScriptedInference>,
}

impl Default for Fixture {
    fn default() -> Self {
        Self::new()
    }
}

impl Fixture {
    pub fn new() -> Self {
        Self::build(Script::default(), None, fast_config(), None)
    }

    /// Custom inference backend and/or an extra event sink fed after recording.
    pub fn with_parts(parts: Parts) -> Self {
        let clock = Arc::new(ManualClock::fixed());
        let mail = Arc::new(MemoryProvider::default());
        let events = Arc::new(RecordingSink::default());
        let scripted = Arc::new(ScriptedInference::new(parts.script).with_clock(clock.clone()));
        let sink: Arc<dyn EventSink> = match parts.sink {
            Some(next) => Arc::new(Tee {
                record: events.clone(),
                next,
            }),
            None => events.clone(),
        };
        let platform = Platform::builder()
            .config(parts.config.unwrap_or_else(fast_config))
            .clock(clock.clone())
            .mailer(mail.clone())
            .events(sink)
            .inference(parts.inference.unwrap_or_else(|| scripted.clone()))
            .build();
        Self {
            platform: Arc::new(platform),
            clock,
            mail,
            events,
            scripted,
        }
    }

    pub fn with_script(script: Script) -> Self {
        Self::build(script, None, fast_config(), None)
    }

    pub fn with_moderator(moderator: Moderator) -> Self {
        Self::build(Script::default(), Some(moderator), fast_config(), None)
    }

    pub fn with_config(config: PlatformConfig, script: Script) -> Self {
        Self::build(script, None, config, None)
    }

    fn build(
        script: Script,
        moderator: Option<Moderator>,
        config: PlatformConfig,
        snapshot: Option<(String, Arc<ManualClock>)>,
    ) -> Self {
        let clock = snapshot
            .as_ref()
            .map(|(_, c)| c.clone())
            .unwrap_or_else(|| Arc::new(ManualClock::fixed()));
        let mail = Arc::new(MemoryProvider::default());
        let events = Arc::new(RecordingSink::default());
        let scripted = Arc::new(ScriptedInference::new(script).with_clock(clock.clone()));
        let mut builder = Platform::builder()
            .config(config)
            .clock(clock.clone())
            .mailer(mail.clone())
            .events(events.clone())
            .inference(scripted.clone());
        if let Some(m) = moderator {
            builder = builder.moderator(m);
        }
        if let Some((json, _)) = snapshot {
            builder = builder.snapshot_json(&json).expect("snapshot loads");
        }
        Self {
            platform: Arc::new(builder.build()),
            clock,
            mail,
            events,
            scripted,
        }
    }

    /// Same state and clock, different consent catalog.
    pub fn rebuild_with_consent(&self, consent: ConsentCatalog) -> Fixture {
        let json = self.platform.snapshot_json().expect("snapshot");
        let config = PlatformConfig {
            consent,
            ..fast_config()
        };
        Self::build(
            Script::default(),
            None,
            config,
            Some((json, self.clock.clone())),
        )
    }

    pub fn user(&self, handle: &str) -> UserId {
        self.platform.register(reg(handle)).expect("register").id
    }

    pub fn admin(&self) -> UserId {
        self.platform
            .seed_admin(reg("admin"))
            .expect("seed admin")
            .id
    }

    /// A registered account already promoted to researcher.
    pub fn researcher(&self, handle: &str) -> UserId {
        let id = self.user(handle);
        self.platform
            .write()
            .accounts
            .get_mut(&id)
            .expect("just registered")
            .kind = AccountKind::Researcher;
        id
    }

    pub fn experiment(&self, owner: UserId, title: &str) -> ExperimentId {
        self.platform
            .create_experiment(
                owner,
                NewExperiment {
                    title: title.into(),
                    description: format!("Description of {title}"),
                    visibility: Visibility::Private,
                    irb_document: Some(pdf()),
                },
            )
            .expect("create experiment")
            .id
    }

    /// Adds an active membership directly, bypassing invitations.
    pub fn add_member(&self, experiment: ExperimentId, user: UserId, role: Role) {
        let now = self.clock.now();
        let mut st = self.platform.write();
        let data = st
            .experiments
            .get_mut(&experiment)
            .expect("experiment exists");
        let owner = data.experiment.owner;
        data.memberships.insert(
            user,
            Membership {
                user,
                experiment,
                role,
                status: MembershipStatus::Active,
                invited_by: owner,
                joined_at: Some(now),
            },
        );
    }

    pub fn member(&self, experiment: ExperimentId, handle: &str, role: Role) -> UserId {
        let id = self.user(handle);
        self.add_member(experiment, id, role);
        id
    }

    /// An agent with all actions, default limits and the stub endpoint.
    pub fn agent(&self, owner: UserId, experiment: ExperimentId, handle: &str) -> UserId {
        let mut new = NewAgent::new(handle, &format!("You are {handle}."));
        new.endpoint_url = Some(STUB_ENDPOINT.into());
        new.model_name = Some("stub".into());
        self.platform
            .register_agent(owner, experiment, new)
            .expect("register agent")
            .id
    }

    /// Full session token: password, then TOTP (enrolling a device if needed).
    pub fn session(&self, user: UserId) -> String {
        let handle = self.platform.account(user).expect("account").handle;
        let session = self.platform.login(&handle, PASSWORD).expect("login");
        let now = self.clock.now().timestamp() as u64;
        let device = match self
            .platform
            .totp_devices(user)
            .into_iter()
            .find(|d| d.confirmed)
        {
            Some(d) => d,
            None => {
                let (device, _) = self.platform.enroll_totp(user, "test").expect("enroll");
                self.platform
                    .confirm_totp(user, device.id, &totp::code_at(&device.secret, now))
                    .expect("confirm")
            }
        };
        self.platform
            .verify_second_factor(&session.token, &totp::code_at(&device.secret, now))
            .expect("second factor")
            .token
    }

    /// The discourse event emitted for `post`.
    pub fn event_for(&self, post: PostId) -> EventId {
        self.platform
            .events()
            .into_iter()
            .find(|e| e.post == post)
            .expect("event for post")
            .id
    }

    /// Every notification ever addressed to `user`.
    pub fn notification_count(&self, user: UserId) -> usize {
        self.platform
            .read()
            .notifications
            .values()
            .filter(|n| n.recipient == user)
            .count()
    }
}
