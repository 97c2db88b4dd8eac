//! Experiment export: a zip holding `manifest.json` plus one NDJSON file per
//! record type. Anonymized bundles replace every identity with a keyed-hash
//! pseudonym whose key is discarded when the export finishes.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Cursor, Read, Write};

use chrono::{DateTime, Utc};
use hmac::{Hmac, Mac};
use rand::RngCore;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use zip::write::SimpleFileOptions;

use crate::agents::{AgentAction, TriggerPolicy};
use crate::discourse::hashtags::extract_hashtags;
use crate::discourse::PostKind;
use crate::error::{PdsError, Result};
use crate::experiments::permissions::Role;
use crate::experiments::MembershipStatus;
use crate::feeds::NotificationKind;
use crate::ids::*;
use crate::moderation::FlagState;
use crate::store::{Platform, State};

pub const SCHEMA_VERSION: u32 = 1;
pub const REMOVED_MEMBER: &str = "removed_member";
pub const RECORD_FILES: [&str; 8] = [
    "posts",
    "likes",
    "follows",
    "memberships",
    "notifications",
    "agents",
    "agent_tasks",
    "moderation",
];
const IRB_FILE: &str = "irb_document.pdf";

/// A user reference: the numeric id, or a pseudonym in anonymized bundles.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UserRef {
    Id(UserId),
    Pseudonym(String),
}

impl UserRef {
    pub fn id(&self) -> Result<UserId> {
        match self {
            UserRef::Id(id) => Ok(*id),
            UserRef::Pseudonym(_) => Err(PdsError::BadBundle("bundle is anonymized".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub id: ExperimentId,
    pub title: String,
    pub description: String,
    pub owner: UserRef,
    pub created_at: DateTime<Utc>,
    pub show_agent_badge: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub experiment: ExperimentRecord,
    pub exported_at: DateTime<Utc>,
    pub counts: BTreeMap<String, usize>,
    pub classifier_version: String,
    pub anonymized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostRecord {
    pub id: PostId,
    pub author: UserRef,
    pub kind: PostKind,
    pub body: String,
    pub parent: Option<PostId>,
    pub repost_of: Option<PostId>,
    pub hashtags: BTreeSet<String>,
    pub created_at: DateTime<Utc>,
    pub deleted: bool,
    pub deleted_by: Option<UserRef>,
    pub classifier_version: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikeRecord {
    pub post: PostId,
    pub user: UserRef,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowRecord {
    pub follower: UserRef,
    pub followee: UserRef,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipRecord {
    pub user: UserRef,
    /// Profile fields; absent in anonymized bundles.
    pub handle: Option<String>,
    pub display_name: Option<String>,
    pub bio: Option<String>,
    pub account_created_at: Option<DateTime<Utc>>,
    pub is_agent: bool,
    pub role: Role,
    pub status: MembershipStatus,
    pub invited_by: UserRef,
    pub joined_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotificationRecord {
    pub id: NotificationId,
    pub recipient: UserRef,
    pub kind: NotificationKind,
    pub actor: UserRef,
    pub post: Option<PostId>,
    pub created_at: DateTime<Utc>,
    pub seen: bool,
}

/// Agent configuration without the API key. The endpoint host is kept,
/// credentials embedded in the URL are not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub agent: UserRef,
    pub persona_prompt: String,
    pub endpoint_url: Option<String>,
    pub model_name: Option<String>,
    pub trigger_policy: TriggerPolicy,
    pub actions_enabled: BTreeSet<AgentAction>,
    pub max_thread_depth: u32,
    pub min_seconds_between_actions: u32,
    pub active: bool,
    pub created_by: UserRef,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub id: TaskId,
    pub event: EventId,
    pub agent: UserRef,
    pub post: PostId,
    pub state: crate::agents::TaskState,
    pub attempts: u32,
    pub actions_taken: Vec<crate::agents::ActionTaken>,
    pub notes: Vec<String>,
    pub created_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModerationRecord {
    Flag {
        id: FlagId,
        post: PostId,
        raised_by: UserRef,
        reason: String,
        state: FlagState,
        created_at: DateTime<Utc>,
        resolved_by: Option<UserRef>,
        resolved_at: Option<DateTime<Utc>>,
    },
    Report {
        id: ReportId,
        reporter: UserRef,
        target: UserRef,
        reason: String,
        created_at: DateTime<Utc>,
        resolved: bool,
    },
    Deletion {
        post: PostId,
        deleted_by: UserRef,
    },
}

/// An export in memory: the manifest plus the raw file contents.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportBundle {
    pub manifest: Manifest,
    /// `posts.ndjson` etc.
    pub files: BTreeMap<String, String>,
    pub irb_document: Option<Vec<u8>>,
}

fn ndjson<T: Serialize>(records: &[T]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
        .collect()
}

impl ExportBundle {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files
            .get(&format!("{name}.ndjson"))
            .map(String::as_str)
    }

    pub fn records<T: for<'de> Deserialize<'de>>(&self, name: &str) -> Result<Vec<T>> {
        self.file(name)
            .unwrap_or_default()
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                serde_json::from_str(l).map_err(|e| PdsError::BadBundle(format!("{name}: {e}")))
            })
            .collect()
    }

    /// The manifest and every record file concatenated; handy for scans.
    pub fn all_text(&self) -> String {
        let mut text = serde_json::to_string(&self.manifest).expect("manifest serializes");
        for body in self.files.values() {
            text.push('\n');
            text.push_str(body);
        }
        text
    }

    pub fn to_zip(&self) -> Result<Vec<u8>> {
        let io = |e: std::io::Error| PdsError::Storage(e.to_string());
        let zerr = |e: zip::result::ZipError| PdsError::Storage(e.to_string());
        let mut zip = zip::ZipWriter::new(Cursor::new(Vec::new()));
        let opts =
            SimpleFileOptions::default().compression_method(zip::CompressionMethod::Deflated);
        zip.start_file("manifest.json", opts).map_err(zerr)?;
        zip.write_all(
            serde_json::to_string_pretty(&self.manifest)
                .expect("manifest serializes")
                .as_bytes(),
        )
        .map_err(io)?;
        for (name, body) in &self.files {
            zip.start_file(name.as_str(), opts).map_err(zerr)?;
            zip.write_all(body.as_bytes()).map_err(io)?;
        }
        if let Some(pdf) = &self.irb_document {
            zip.start_file(IRB_FILE, opts).map_err(zerr)?;
            zip.write_all(pdf).map_err(io)?;
        }
        Ok(zip.finish().map_err(zerr)?.into_inner())
    }

    pub fn from_zip(bytes: &[u8]) -> Result<Self> {
        let bad = |e: &dyn std::fmt::Display| PdsError::BadBundle(e.to_string());
        let mut archive = zip::ZipArchive::new(Cursor::new(bytes)).map_err(|e| bad(&e))?;
        let mut manifest = None;
        let mut files = BTreeMap::new();
        let mut irb_document = None;
        for i in 0..archive.len() {
            let mut entry = archive.by_index(i).map_err(|e| bad(&e))?;
            let name = entry.name().to_string();
            let mut raw = Vec::new();
            entry.read_to_end(&mut raw).map_err(|e| bad(&e))?;
            if name == IRB_FILE {
                irb_document = Some(raw);
                continue;
            }
            let text = String::from_utf8(raw).map_err(|e| bad(&e))?;
            if name == "manifest.json" {
                manifest = Some(serde_json::from_str::<Manifest>(&text).map_err(|e| bad(&e))?);
            } else if name.ends_with(".ndjson") {
                files.insert(name, text);
            }
        }
        let manifest =
            manifest.ok_or_else(|| PdsError::BadBundle("manifest.json missing".into()))?;
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(PdsError::BadBundle(format!(
                "unsupported schema_version {}",
                manifest.schema_version
            )));
        }
        Ok(Self {
            manifest,
            files,
            irb_document,
        })
    }
}

/// Maps users to what the bundle shows for them and scrubs free text.
struct Identities {
    key: Option<[u8; 32]>,
    removed: BTreeSet<UserId>,
    names: Option<(Regex, BTreeMap<String, UserId>)>,
    email: Regex,
}

fn email_pattern() -> Regex {
    Regex::new(r"[A-Za-z0-9._%+\-]+@[A-Za-z0-9\-]+(?:\.[A-Za-z0-9\-]+)+").expect("static regex")
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

impl Identities {
    fn plain() -> Self {
        Self {
            key: None,
            removed: BTreeSet::new(),
            names: None,
            email: email_pattern(),
        }
    }

    fn anonymizing(st: &State, removed: BTreeSet<UserId>) -> Self {
        let mut key = [0u8; 32];
        rand::rng().fill_bytes(&mut key);
        let mut names: BTreeMap<String, UserId> = BTreeMap::new();
        for account in st.accounts.values() {
            for name in [&account.handle, &account.display_name] {
                let name = name.trim().to_lowercase();
                if !name.is_empty() {
                    names.entry(name).or_insert(account.id);
                }
            }
        }
        let mut sorted: Vec<&String> = names.keys().collect();
        sorted.sort_by_key(|n| std::cmp::Reverse(n.chars().count()));
        let pattern = sorted
            .iter()
            .map(|n| regex::escape(n))
            .collect::<Vec<_>>()
            .join("|");
        let names = (!sorted.is_empty()).then(|| {
            (
                Regex::new(&format!("(?i){pattern}")).expect("escaped names"),
                names,
            )
        });
        Self {
            key: Some(key),
            removed,
            names,
            email: email_pattern(),
        }
    }

    fn anonymized(&self) -> bool {
        self.key.is_some()
    }

    fn pseudonym(&self, user: UserId) -> String {
        if self.removed.contains(&user) {
            return REMOVED_MEMBER.to_string();
        }
        let key = self.key.as_ref().expect("anonymizing");
        let mut mac = Hmac::<Sha256>::new_from_slice(key).expect("any key length");
        mac.update(&user.0.to_be_bytes());
        let digest = mac.finalize().into_bytes();
        let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        format!("anon_{hex}")
    }

    fn user(&self, user: UserId) -> UserRef {
        if self.anonymized() {
            UserRef::Pseudonym(self.pseudonym(user))
        } else {
            UserRef::Id(user)
        }
    }

    /// Replaces emails, handles and display names in free text.
    fn text(&self, text: &str) -> String {
        let Some((names, owners)) = &self.names else {
            return text.to_string();
        };
        let text = self.email.replace_all(text, "[email]");
        let mut out = String::with_capacity(text.len());
        let mut last = 0;
        let mut pos = 0;
        while let Some(m) = names.find_at(&text, pos) {
            let before = text[..m.start()].chars().next_back();
            let after = text[m.end()..].chars().next();
            let matched = m.as_str();
            let starts_word = matched.chars().next().is_some_and(is_word);
            let ends_word = matched.chars().next_back().is_some_and(is_word);
            let bounded = !(starts_word && before.is_some_and(is_word))
                && !(ends_word && after.is_some_and(is_word));
            if bounded {
                out.push_str(&text[last..m.start()]);
                let owner = owners[&matched.to_lowercase()];
                out.push_str(&self.pseudonym(owner));
                last = m.end();
                pos = m.end();
            } else {
                pos = m.start() + text[m.start()..].chars().next().map_or(1, char::len_utf8);
            }
            if pos >= text.len() {
                break;
            }
        }
        out.push_str(&text[last..]);
        out
    }
}

fn strip_credentials(url: &url::Url) -> String {
    let mut url = url.clone();
    let _ = url.set_username("");
    let _ = url.set_password(None);
    url.to_string()
}

impl Platform {
    /// Exports one experiment. Staff only.
    pub fn export_experiment(
        &self,
        actor: UserId,
        experiment: ExperimentId,
        anonymize: bool,
    ) -> Result<ExportBundle> {
        let now = self.now();
        let st = self.read();
        st.experiment_data(experiment)?;
        let scope = st.scope(experiment, actor)?;
        if !scope.role().is_staff() {
            return Err(PdsError::forbidden(Some(scope.role()), "export"));
        }
        let data = st.partition(&scope);
        let ids = if anonymize {
            let removed = data
                .memberships
                .values()
                .filter(|m| {
                    matches!(
                        m.status,
                        MembershipStatus::Removed | MembershipStatus::Banned
                    )
                })
                .map(|m| m.user)
                .collect();
            Identities::anonymizing(&st, removed)
        } else {
            Identities::plain()
        };

        let posts: Vec<PostRecord> = data
            .posts
            .values()
            .map(|p| {
                let body = ids.text(&p.body);
                // a tag can spell a handle, so tags follow the scrubbed body
                let hashtags = if ids.anonymized() {
                    extract_hashtags(&body)
                } else {
                    p.hashtags.clone()
                };
                PostRecord {
                    id: p.id,
                    author: ids.user(p.author),
                    kind: p.kind,
                    body,
                    parent: p.parent,
                    repost_of: p.repost_of,
                    hashtags,
                    created_at: p.created_at,
                    deleted: p.deleted,
                    deleted_by: p.deleted_by.map(|u| ids.user(u)),
                    classifier_version: p.classifier_version.clone(),
                }
            })
            .collect();
        let likes: Vec<LikeRecord> = data
            .likes
            .values()
            .flat_map(|m| m.values())
            .map(|l| LikeRecord {
                post: l.post,
                user: ids.user(l.user),
                created_at: l.created_at,
            })
            .collect();
        let follows: Vec<FollowRecord> = data
            .follows
            .values()
            .flat_map(|m| m.values())
            .map(|f| FollowRecord {
                follower: ids.user(f.follower),
                followee: ids.user(f.followee),
                created_at: f.created_at,
            })
            .collect();
        let memberships: Vec<MembershipRecord> = data
            .memberships
            .values()
            .map(|m| {
                let account = st.accounts.get(&m.user);
                let profile = |f: fn(&crate::identity::UserAccount) -> String| {
                    (!ids.anonymized()).then(|| account.map(f)).flatten()
                };
                MembershipRecord {
                    user: ids.user(m.user),
                    handle: profile(|a| a.handle.clone()),
                    display_name: profile(|a| a.display_name.clone()),
                    bio: profile(|a| a.bio.clone()),
                    account_created_at: (!ids.anonymized())
                        .then(|| account.map(|a| a.created_at))
                        .flatten(),
                    is_agent: account.is_some_and(|a| a.is_agent),
                    role: m.role,
                    status: m.status,
                    invited_by: ids.user(m.invited_by),
                    joined_at: m.joined_at,
                }
            })
            .collect();
        let notifications: Vec<NotificationRecord> = st
            .notifications
            .values()
            .filter(|n| n.experiment == experiment)
            .map(|n| NotificationRecord {
                id: n.id,
                recipient: ids.user(n.recipient),
                kind: n.kind,
                actor: ids.user(n.actor),
                post: n.post,
                created_at: n.created_at,
                seen: n.seen,
            })
            .collect();
        let agents: Vec<AgentRecord> = st
            .agents
            .values()
            .filter(|a| a.experiment == experiment)
            .map(|a| AgentRecord {
                agent: ids.user(a.id),
                persona_prompt: ids.text(&a.persona_prompt),
                endpoint_url: a.endpoint_url.as_ref().map(strip_credentials),
                model_name: a.model_name.clone(),
                trigger_policy: a.trigger_policy,
                actions_enabled: a.actions_enabled.clone(),
                max_thread_depth: a.max_thread_depth,
                min_seconds_between_actions: a.min_seconds_between_actions,
                active: a.active,
                created_by: ids.user(a.created_by),
                created_at: a.created_at,
            })
            .collect();
        let tasks: Vec<TaskRecord> = st
            .tasks
            .values()
            .filter(|t| t.experiment == experiment)
            .map(|t| TaskRecord {
                id: t.id,
                event: t.event,
                agent: ids.user(t.agent),
                post: t.post,
                state: t.state,
                attempts: t.attempts,
                actions_taken: t.actions_taken.clone(),
                notes: t.notes.clone(),
                created_at: t.created_at,
                finished_at: t.finished_at,
            })
            .collect();
        let mut moderation: Vec<ModerationRecord> = data
            .flags
            .values()
            .map(|f| ModerationRecord::Flag {
                id: f.id,
                post: f.post,
                raised_by: ids.user(f.raised_by),
                reason: ids.text(&f.reason),
                state: f.state,
                created_at: f.created_at,
                resolved_by: f.resolved_by.map(|u| ids.user(u)),
                resolved_at: f.resolved_at,
            })
            .collect();
        moderation.extend(data.reports.values().map(|r| ModerationRecord::Report {
            id: r.id,
            reporter: ids.user(r.reporter),
            target: ids.user(r.target),
            reason: ids.text(&r.reason),
            created_at: r.created_at,
            resolved: r.resolved,
        }));
        moderation.extend(data.posts.values().filter_map(|p| {
            Some(ModerationRecord::Deletion {
                post: p.id,
                deleted_by: ids.user(p.deleted_by?),
            })
        }));

        let mut files = BTreeMap::new();
        let mut counts = BTreeMap::new();
        let mut add = |name: &str, body: String, n: usize| {
            files.insert(format!("{name}.ndjson"), body);
            counts.insert(name.to_string(), n);
        };
        add("posts", ndjson(&posts), posts.len());
        add("likes", ndjson(&likes), likes.len());
        add("follows", ndjson(&follows), follows.len());
        add("memberships", ndjson(&memberships), memberships.len());
        add("notifications", ndjson(&notifications), notifications.len());
        add("agents", ndjson(&agents), agents.len());
        add("agent_tasks", ndjson(&tasks), tasks.len());
        add("moderation", ndjson(&moderation), moderation.len());

        let exp = &data.experiment;
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            experiment: ExperimentRecord {
                id: exp.id,
                title: ids.text(&exp.title),
                description: ids.text(&exp.description),
                owner: ids.user(exp.owner),
                created_at: exp.created_at,
                show_agent_badge: exp.show_agent_badge,
            },
            exported_at: now,
            counts,
            classifier_version: self.moderator.classifier_version(),
            anonymized: anonymize,
        };
        let irb_document = (!anonymize)
            .then(|| st.media.get(&exp.irb_document).map(|m| m.bytes.clone()))
            .flatten();
        Ok(ExportBundle {
            manifest,
            files,
            irb_document,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::Fixture;

    #[test]
    fn scrubbing_respects_word_boundaries() {
        let f = Fixture::new();
        let owner = f.researcher("owner");
        let _ = owner;
        f.user("ada");
        let st = f.platform.read();
        let ids = Identities::anonymizing(&st, BTreeSet::new());
        let ada = st.handles["ada"];
        let p = ids.pseudonym(ada);
        assert_eq!(ids.text("hi @ada and ADA"), format!("hi @{p} and {p}"));
        assert_eq!(ids.text("canada adamant"), "canada adamant");
        assert_eq!(ids.text("mail ada@example.org"), "mail [email]");
    }

    #[test]
    fn pseudonyms_stable_within_export_not_across() {
        let f = Fixture::new();
        let owner = f.researcher("owner");
        let st = f.platform.read();
        let a = Identities::anonymizing(&st, BTreeSet::new());
        let b = Identities::anonymizing(&st, BTreeSet::new());
        assert_eq!(a.pseudonym(owner), a.pseudonym(owner));
        assert_ne!(a.pseudonym(owner), b.pseudonym(owner));
        assert!(a.pseudonym(owner).starts_with("anon_"));
    }

    #[test]
    fn zip_roundtrip() {
        let f = Fixture::new();
        let owner = f.researcher("owner");
        let exp = f.experiment(owner, "S");
        f.platform.create_post(owner, exp, "hello #x").unwrap();
        let bundle = f.platform.export_experiment(owner, exp, false).unwrap();
        let bytes = bundle.to_zip().unwrap();
        let back = ExportBundle::from_zip(&bytes).unwrap();
        assert_eq!(back, bundle);
        assert_eq!(back.manifest.counts["posts"], 1);
        assert!(ExportBundle::from_zip(b"not a zip").is_err());
    }
}
