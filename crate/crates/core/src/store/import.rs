//! Rebuilds an experiment from a non-anonymized bundle, keeping source ids.
//! A development tool: imported accounts have no email or password.

use std::collections::BTreeSet;

use crate::agents::AgentProfile;
use crate::discourse::{Follow, Like, Post};
use crate::error::{PdsError, Result};
use crate::experiments::{Experiment, Membership, UserReport, Visibility};
use crate::feeds::Notification;
use crate::identity::{AccountKind, AccountStatus, UserAccount};
use crate::ids::{ExperimentId, MediaId, UserId};
use crate::moderation::Flag;
use crate::store::export::*;
use crate::store::media::MediaObject;
use crate::store::{ExperimentData, Platform, State};

fn placeholder_account(id: UserId, at: chrono::DateTime<chrono::Utc>) -> UserAccount {
    UserAccount {
        id,
        handle: format!("user_{id}"),
        email: None,
        password_digest: None,
        kind: AccountKind::Regular,
        is_admin: false,
        is_agent: false,
        display_name: format!("user {id}"),
        bio: String::new(),
        profile_photo: None,
        banner_photo: None,
        created_at: at,
        status: AccountStatus::Active,
    }
}

impl Platform {
    pub fn import_bundle(&self, bundle: &ExportBundle) -> Result<ExperimentId> {
        if bundle.manifest.anonymized {
            return Err(PdsError::BadBundle(
                "anonymized bundles cannot be imported".into(),
            ));
        }
        let posts: Vec<PostRecord> = bundle.records("posts")?;
        let likes: Vec<LikeRecord> = bundle.records("likes")?;
        let follows: Vec<FollowRecord> = bundle.records("follows")?;
        let memberships: Vec<MembershipRecord> = bundle.records("memberships")?;
        let notifications: Vec<NotificationRecord> = bundle.records("notifications")?;
        let agents: Vec<AgentRecord> = bundle.records("agents")?;
        let moderation: Vec<ModerationRecord> = bundle.records("moderation")?;
        let exp = &bundle.manifest.experiment;

        let mut st = self.write();
        if st.experiments.contains_key(&exp.id) {
            return Err(PdsError::BadBundle(format!(
                "experiment {} already exists",
                exp.id
            )));
        }
        let mut staged = st.clone_for_import();
        import_into(
            &mut staged,
            bundle,
            &posts,
            &likes,
            &follows,
            &memberships,
            &notifications,
            &agents,
            &moderation,
        )?;
        *st = staged;
        Ok(exp.id)
    }
}

impl State {
    fn clone_for_import(&self) -> State {
        let json = serde_json::to_string(self).expect("state serializes");
        serde_json::from_str(&json).expect("state deserializes")
    }

    fn ensure_account(&mut self, id: UserId, at: chrono::DateTime<chrono::Utc>) {
        if !self.accounts.contains_key(&id) {
            let account = placeholder_account(id, at);
            self.handles.insert(account.handle.clone(), id);
            self.ids.observe_user(id);
            self.accounts.insert(id, account);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn import_into(
    st: &mut State,
    bundle: &ExportBundle,
    posts: &[PostRecord],
    likes: &[LikeRecord],
    follows: &[FollowRecord],
    memberships: &[MembershipRecord],
    notifications: &[NotificationRecord],
    agents: &[AgentRecord],
    moderation: &[ModerationRecord],
) -> Result<()> {
    let exp = &bundle.manifest.experiment;
    let at = exp.created_at;
    let conflict = |what: &str| PdsError::BadBundle(format!("{what} already exists"));

    for m in memberships {
        let id = m.user.id()?;
        if st.accounts.contains_key(&id) {
            return Err(conflict(&format!("user {id}")));
        }
        let handle = m.handle.clone().unwrap_or_else(|| format!("user_{id}"));
        st.insert_account(UserAccount {
            id,
            handle: handle.clone(),
            email: None,
            password_digest: None,
            kind: AccountKind::Regular,
            is_admin: false,
            is_agent: m.is_agent,
            display_name: m.display_name.clone().unwrap_or(handle),
            bio: m.bio.clone().unwrap_or_default(),
            profile_photo: None,
            banner_photo: None,
            created_at: m.account_created_at.unwrap_or(at),
            status: AccountStatus::Active,
        })?;
    }
    let owner = exp.owner.id()?;
    st.ensure_account(owner, at);
    if let Some(account) = st.accounts.get_mut(&owner) {
        account.kind = AccountKind::Researcher;
    }

    let irb_document = match &bundle.irb_document {
        Some(bytes) => {
            let id = st.ids.next_media();
            st.media.insert(
                id,
                MediaObject {
                    id,
                    owner,
                    content_type: "application/pdf".into(),
                    bytes: bytes.clone(),
                    created_at: at,
                },
            );
            id
        }
        None => MediaId(0),
    };
    let mut data = ExperimentData::new(Experiment {
        id: exp.id,
        title: exp.title.clone(),
        description: exp.description.clone(),
        visibility: Visibility::Private,
        irb_document,
        owner,
        created_at: exp.created_at,
        show_agent_badge: exp.show_agent_badge,
    });
    st.ids.observe_experiment(exp.id);

    for m in memberships {
        let user = m.user.id()?;
        let invited_by = m.invited_by.id()?;
        st.ensure_account(invited_by, at);
        data.memberships.insert(
            user,
            Membership {
                user,
                experiment: exp.id,
                role: m.role,
                status: m.status,
                invited_by,
                joined_at: m.joined_at,
            },
        );
    }

    for p in posts {
        if st.post_index.contains_key(&p.id) {
            return Err(conflict(&format!("post {}", p.id)));
        }
        let author = p.author.id()?;
        st.ensure_account(author, at);
        let post = Post {
            id: p.id,
            experiment: exp.id,
            author,
            body: p.body.clone(),
            kind: p.kind,
            parent: p.parent,
            repost_of: p.repost_of,
            hashtags: p.hashtags.clone(),
            created_at: p.created_at,
            deleted: p.deleted,
            deleted_by: p.deleted_by.as_ref().map(UserRef::id).transpose()?,
            classifier_version: p.classifier_version.clone(),
        };
        if let Some(parent) = post.parent {
            data.children.entry(parent).or_default().push(post.id);
        }
        if let Some(original) = post.repost_of {
            data.reposts.entry(original).or_default().push(post.id);
        }
        st.post_index.insert(post.id, exp.id);
        st.ids.observe_post(post.id);
        data.posts.insert(post.id, post);
    }
    for l in likes {
        let user = l.user.id()?;
        data.likes.entry(l.post).or_default().insert(
            user,
            Like {
                user,
                post: l.post,
                created_at: l.created_at,
            },
        );
    }
    for f in follows {
        let (follower, followee) = (f.follower.id()?, f.followee.id()?);
        data.follows.entry(follower).or_default().insert(
            followee,
            Follow {
                follower,
                followee,
                experiment: exp.id,
                created_at: f.created_at,
            },
        );
    }
    for n in notifications {
        if st.notifications.contains_key(&n.id) {
            return Err(conflict(&format!("notification {}", n.id)));
        }
        st.ids.observe_notification(n.id);
        st.notifications.insert(
            n.id,
            Notification {
                id: n.id,
                recipient: n.recipient.id()?,
                experiment: exp.id,
                kind: n.kind,
                actor: n.actor.id()?,
                post: n.post,
                created_at: n.created_at,
                seen: n.seen,
            },
        );
    }
    for record in moderation {
        match record {
            ModerationRecord::Flag {
                id,
                post,
                raised_by,
                reason,
                state,
                created_at,
                resolved_by,
                resolved_at,
            } => {
                st.ids.observe_flag(*id);
                st.flag_index.insert(*id, exp.id);
                data.flags.insert(
                    *id,
                    Flag {
                        id: *id,
                        post: *post,
                        raised_by: raised_by.id()?,
                        reason: reason.clone(),
                        state: *state,
                        created_at: *created_at,
                        resolved_by: resolved_by.as_ref().map(UserRef::id).transpose()?,
                        resolved_at: *resolved_at,
                    },
                );
            }
            ModerationRecord::Report {
                id,
                reporter,
                target,
                reason,
                created_at,
                resolved,
            } => {
                st.ids.observe_report(*id);
                data.reports.insert(
                    *id,
                    UserReport {
                        id: *id,
                        experiment: exp.id,
                        reporter: reporter.id()?,
                        target: target.id()?,
                        reason: reason.clone(),
                        created_at: *created_at,
                        resolved: *resolved,
                    },
                );
            }
            ModerationRecord::Deletion { .. } => {}
        }
    }
    let mut seen_agents = BTreeSet::new();
    for a in agents {
        let id = a.agent.id()?;
        seen_agents.insert(id);
        st.agents.insert(
            id,
            AgentProfile {
                id,
                experiment: exp.id,
                persona_prompt: a.persona_prompt.clone(),
                endpoint_url: a
                    .endpoint_url
                    .as_deref()
                    .and_then(|u| url::Url::parse(u).ok()),
                model_name: a.model_name.clone(),
                api_key: None,
                trigger_policy: a.trigger_policy,
                actions_enabled: a.actions_enabled.clone(),
                max_thread_depth: a.max_thread_depth,
                min_seconds_between_actions: a.min_seconds_between_actions,
                active: a.active,
                created_by: a.created_by.id()?,
                created_at: a.created_at,
                last_action_at: None,
            },
        );
    }
    st.experiments.insert(exp.id, data);
    Ok(())
}
