//! Experiment lifecycle, memberships, email invitations, removal, bans and
//! user reports.

pub mod permissions;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{PdsError, Result};
use crate::identity::{normalize_email, AccountKind};
use crate::ids::{random_token, ExperimentId, MediaId, ReportId, UserId};
use crate::mail::{EmailKind, EmailState, OutboundEmail};
use crate::store::media::MediaUpload;
use crate::store::{ExperimentData, ExperimentScope, Platform, State};
use crate::text::scalar_len;
use permissions::{Action, Role};

pub const MAX_TITLE_CHARS: usize = 120;
pub const MAX_DESCRIPTION_CHARS: usize = 4000;
pub const MAX_REPORT_REASON_CHARS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    Private,
    /// Accepted on the wire so it can be rejected explicitly.
    Public,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Experiment {
    pub id: ExperimentId,
    pub title: String,
    pub description: String,
    pub visibility: Visibility,
    pub irb_document: MediaId,
    pub owner: UserId,
    pub created_at: DateTime<Utc>,
    /// Whether regular members see which accounts are agents.
    pub show_agent_badge: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MembershipStatus {
    Invited,
    Active,
    Removed,
    Banned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub user: UserId,
    pub experiment: ExperimentId,
    pub role: Role,
    pub status: MembershipStatus,
    pub invited_by: UserId,
    pub joined_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvitationState {
    Pending,
    Accepted,
    Expired,
    Revoked,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Invitation {
    pub token: String,
    pub experiment: ExperimentId,
    pub email: String,
    pub role: Role,
    pub invited_by: UserId,
    pub created_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
    pub state: InvitationState,
    pub email_state: EmailState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserReport {
    pub id: ReportId,
    pub experiment: ExperimentId,
    pub reporter: UserId,
    pub target: UserId,
    pub reason: String,
    pub created_at: DateTime<Utc>,
    pub resolved: bool,
}

#[derive(Debug, Clone)]
pub struct NewExperiment {
    pub title: String,
    pub description: String,
    pub visibility: Visibility,
    pub irb_document: Option<MediaUpload>,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentPatch {
    pub title: Option<String>,
    pub description: Option<String>,
    pub irb_document: Option<MediaUpload>,
    pub show_agent_badge: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MemberView {
    pub user: UserId,
    pub handle: String,
    pub display_name: String,
    pub role: Role,
    pub status: MembershipStatus,
    /// `None` when the experiment hides agent badges from this viewer.
    pub is_agent: Option<bool>,
    pub joined_at: Option<DateTime<Utc>>,
}

/// An experiment the user belongs to or has been invited to.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentListing {
    pub memberships: Vec<(Experiment, Membership)>,
    pub invitations: Vec<PendingInvitation>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PendingInvitation {
    pub token: String,
    pub experiment: ExperimentId,
    pub title: String,
    pub description: String,
    pub role: Role,
    pub expires_at: DateTime<Utc>,
}

pub(crate) fn validate_text(field: &'static str, value: &str, max: usize) -> Result<()> {
    if value.trim().is_empty() {
        return Err(PdsError::EmptyField(field));
    }
    if scalar_len(value) > max {
        return Err(PdsError::FieldTooLong { field, max });
    }
    Ok(())
}

fn invite_action(role: Role) -> Result<Action> {
    match role {
        Role::Owner => Err(PdsError::InvalidRole),
        Role::Collaborator => Ok(Action::InviteAnyRole),
        Role::ContentModerator | Role::Regular => Ok(Action::InviteRegularOrModerator),
    }
}

impl State {
    /// Marks overdue pending invitations as expired.
    fn expire_invitations(&mut self, now: DateTime<Utc>) {
        for inv in self.invitations.values_mut() {
            if inv.state == InvitationState::Pending && inv.expires_at <= now {
                inv.state = InvitationState::Expired;
            }
        }
    }
}

impl Platform {
    pub fn create_experiment(&self, researcher: UserId, new: NewExperiment) -> Result<Experiment> {
        {
            let st = self.read();
            if st.account(researcher)?.kind != AccountKind::Researcher {
                return Err(PdsError::NotResearcher);
            }
        }
        if new.visibility == Visibility::Public {
            return Err(PdsError::PublicNotSupported);
        }
        let irb = new.irb_document.ok_or(PdsError::MissingIrbDocument)?;
        irb.validate_pdf()?;
        validate_text("title", &new.title, MAX_TITLE_CHARS)?;
        if scalar_len(&new.description) > MAX_DESCRIPTION_CHARS {
            return Err(PdsError::FieldTooLong {
                field: "description",
                max: MAX_DESCRIPTION_CHARS,
            });
        }
        let now = self.now();
        let mut st = self.write();
        let irb_document = st.store_media(researcher, irb, now);
        let experiment = Experiment {
            id: st.ids.next_experiment(),
            title: new.title.trim().into(),
            description: new.description.trim().into(),
            visibility: Visibility::Private,
            irb_document,
            owner: researcher,
            created_at: now,
            show_agent_badge: true,
        };
        let mut data = ExperimentData::new(experiment.clone());
        data.memberships.insert(
            researcher,
            Membership {
                user: researcher,
                experiment: experiment.id,
                role: Role::Owner,
                status: MembershipStatus::Active,
                invited_by: researcher,
                joined_at: Some(now),
            },
        );
        st.experiments.insert(experiment.id, data);
        Ok(experiment)
    }

    pub fn update_experiment(
        &self,
        actor: UserId,
        experiment: ExperimentId,
        patch: ExperimentPatch,
    ) -> Result<Experiment> {
        let now = self.now();
        let mut st = self.write();
        let scope = st.scope(experiment, actor)?;
        scope.authorize(Action::ConfigureExperiment)?;
        if let Some(title) = &patch.title {
            validate_text("title", title, MAX_TITLE_CHARS)?;
        }
        if let Some(desc) = &patch.description {
            if scalar_len(desc) > MAX_DESCRIPTION_CHARS {
                return Err(PdsError::FieldTooLong {
                    field: "description",
                    max: MAX_DESCRIPTION_CHARS,
                });
            }
        }
        if let Some(irb) = &patch.irb_document {
            irb.validate_pdf()?;
        }
        let irb = patch.irb_document.map(|m| st.store_media(actor, m, now));
        let exp = &mut st.partition_mut(&scope).experiment;
        if let Some(title) = patch.title {
            exp.title = title.trim().into();
        }
        if let Some(desc) = patch.description {
            exp.description = desc.trim().into();
        }
        if let Some(irb) = irb {
            exp.irb_document = irb;
        }
        if let Some(badge) = patch.show_agent_badge {
            exp.show_agent_badge = badge;
        }
        Ok(exp.clone())
    }

    pub fn experiment(&self, scope: &ExperimentScope) -> Experiment {
        self.read().partition(scope).experiment.clone()
    }

    /// Invites `email` with `role` and emails the accept link. A failed
    /// delivery leaves the invitation pending so it can be re-sent.
    pub fn invite(
        &self,
        actor: UserId,
        experiment: ExperimentId,
        email: &str,
        role: Role,
    ) -> Result<Invitation> {
        let now = self.now();
        let email = normalize_email(email)?;
        let (invitation, message) = {
            let mut st = self.write();
            let scope = st.scope(experiment, actor)?;
            scope.authorize(invite_action(role)?)?;
            st.expire_invitations(now);

            if let Some(&existing_user) = st.emails.get(&email) {
                if let Some(m) = st.partition(&scope).memberships.get(&existing_user) {
                    match m.status {
                        MembershipStatus::Active => return Err(PdsError::AlreadyMember),
                        MembershipStatus::Banned if scope.role() != Role::Owner => {
                            return Err(PdsError::forbidden(Some(scope.role()), "reinvite_banned"));
                        }
                        _ => {}
                    }
                }
            }
            if st.invitations.values().any(|i| {
                i.experiment == experiment
                    && i.email == email
                    && i.state == InvitationState::Pending
            }) {
                return Err(PdsError::DuplicatePendingInvitation);
            }

            let invitation = Invitation {
                token: random_token(16),
                experiment,
                email: email.clone(),
                role,
                invited_by: actor,
                created_at: now,
                expires_at: now + self.config.invitation_ttl,
                state: InvitationState::Pending,
                email_state: EmailState::Queued,
            };
            if let Some(&existing_user) = st.emails.get(&email) {
                st.partition_mut(&scope)
                    .memberships
                    .entry(existing_user)
                    .or_insert(Membership {
                        user: existing_user,
                        experiment,
                        role,
                        status: MembershipStatus::Invited,
                        invited_by: actor,
                        joined_at: None,
                    });
            }
            st.invitations
                .insert(invitation.token.clone(), invitation.clone());
            let message = self.invitation_email(&st, &invitation, now);
            (invitation, message)
        };
        let state = self.send_email(message);
        let mut st = self.write();
        let stored = st
            .invitations
            .get_mut(&invitation.token)
            .expect("invitation just inserted");
        stored.email_state = state;
        Ok(stored.clone())
    }

    fn invitation_email(&self, st: &State, inv: &Invitation, now: DateTime<Utc>) -> OutboundEmail {
        let exp = &st.experiments[&inv.experiment].experiment;
        let inviter = st.handle_of(inv.invited_by);
        let url = format!(
            "{}/invitations/{}",
            self.config.base_url.trim_end_matches('/'),
            inv.token
        );
        let body = format!(
            "@{inviter} invited you to join the experiment \"{title}\" as {role}.\n\n\
             About this experiment:\n{description}\n\n\
             Accept the invitation (valid until {expires}):\n{url}\n",
            title = exp.title,
            role = inv.role,
            description = exp.description,
            expires = inv.expires_at.format("%Y-%m-%d %H:%M UTC"),
        );
        OutboundEmail::new(
            inv.email.clone(),
            format!("Invitation: {}", exp.title),
            body,
            EmailKind::Invitation,
            now,
        )
    }

    /// Sends the invitation email again; the invitation must still be pending.
    pub fn resend_invitation(&self, actor: UserId, token: &str) -> Result<Invitation> {
        let now = self.now();
        let message = {
            let mut st = self.write();
            st.expire_invitations(now);
            let inv = st
                .invitations
                .get(token)
                .cloned()
                .ok_or(PdsError::InvitationNotFound)?;
            let scope = st.scope(inv.experiment, actor)?;
            scope.authorize(invite_action(inv.role)?)?;
            match inv.state {
                InvitationState::Pending => {}
                InvitationState::Expired => return Err(PdsError::TokenExpired),
                _ => return Err(PdsError::TokenUsed),
            }
            self.invitation_email(&st, &inv, now)
        };
        let state = self.send_email(message);
        let mut st = self.write();
        let inv = st
            .invitations
            .get_mut(token)
            .ok_or(PdsError::InvitationNotFound)?;
        inv.email_state = state;
        Ok(inv.clone())
    }

    pub fn revoke_invitation(&self, actor: UserId, token: &str) -> Result<Invitation> {
        let mut st = self.write();
        let inv = st
            .invitations
            .get(token)
            .cloned()
            .ok_or(PdsError::InvitationNotFound)?;
        let scope = st.scope(inv.experiment, actor)?;
        scope.authorize(invite_action(inv.role)?)?;
        if inv.state != InvitationState::Pending {
            return Err(PdsError::TokenUsed);
        }
        let inv = st.invitations.get_mut(token).expect("checked above");
        inv.state = InvitationState::Revoked;
        Ok(inv.clone())
    }

    /// Single-use, email-bound acceptance. The token check and the state
    /// change happen in one critical section.
    pub fn accept_invitation(&self, token: &str, user: UserId) -> Result<Membership> {
        let now = self.now();
        let mut st = self.write();
        let inv = st
            .invitations
            .get(token)
            .cloned()
            .ok_or(PdsError::InvitationNotFound)?;
        match inv.state {
            InvitationState::Accepted | InvitationState::Revoked => {
                return Err(PdsError::TokenUsed)
            }
            InvitationState::Expired => return Err(PdsError::TokenExpired),
            InvitationState::Pending if inv.expires_at <= now => {
                st.invitations.get_mut(token).expect("present").state = InvitationState::Expired;
                return Err(PdsError::TokenExpired);
            }
            InvitationState::Pending => {}
        }
        if st.account(user)?.email.as_deref() != Some(inv.email.as_str()) {
            return Err(PdsError::EmailMismatch);
        }
        let data = st.experiment_data_mut(inv.experiment)?;
        let membership = data.memberships.entry(user).or_insert(Membership {
            user,
            experiment: inv.experiment,
            role: inv.role,
            status: MembershipStatus::Invited,
            invited_by: inv.invited_by,
            joined_at: None,
        });
        if membership.role != Role::Owner {
            membership.role = inv.role;
            membership.invited_by = inv.invited_by;
        }
        membership.status = MembershipStatus::Active;
        membership.joined_at = Some(now);
        let membership = membership.clone();
        st.invitations.get_mut(token).expect("present").state = InvitationState::Accepted;
        Ok(membership)
    }

    /// Revokes a member's access. Their posts stay in the experiment.
    pub fn remove_member(
        &self,
        actor: UserId,
        experiment: ExperimentId,
        target: UserId,
    ) -> Result<Membership> {
        let mut st = self.write();
        let scope = st.scope(experiment, actor)?;
        let current = st
            .partition(&scope)
            .memberships
            .get(&target)
            .cloned()
            .ok_or(PdsError::NotAMember)?;
        if current.role == Role::Owner {
            return Err(PdsError::CannotRemoveOwner);
        }
        if current.role == Role::Regular {
            scope.authorize(Action::RemoveRegular)?;
        } else if !scope.can(Action::ConfigureExperiment) {
            return Err(PdsError::forbidden(
                Some(scope.role()),
                format!("remove_{}", current.role),
            ));
        }
        if !matches!(
            current.status,
            MembershipStatus::Active | MembershipStatus::Invited
        ) {
            return Err(PdsError::NotAMember);
        }
        self.set_member_status(&mut st, &scope, target, MembershipStatus::Removed)
    }

    /// Bans a regular member; only the owner can invite them again.
    pub fn ban_member(
        &self,
        actor: UserId,
        experiment: ExperimentId,
        target: UserId,
    ) -> Result<Membership> {
        let mut st = self.write();
        let scope = st.scope(experiment, actor)?;
        scope.authorize(Action::BanRegular)?;
        let current = st
            .partition(&scope)
            .memberships
            .get(&target)
            .cloned()
            .ok_or(PdsError::NotAMember)?;
        if current.role != Role::Regular {
            return Err(PdsError::forbidden(
                Some(scope.role()),
                format!("ban_{}", current.role),
            ));
        }
        if !matches!(
            current.status,
            MembershipStatus::Active | MembershipStatus::Invited
        ) {
            return Err(PdsError::NotAMember);
        }
        self.set_member_status(&mut st, &scope, target, MembershipStatus::Banned)
    }

    fn set_member_status(
        &self,
        st: &mut State,
        scope: &ExperimentScope,
        target: UserId,
        status: MembershipStatus,
    ) -> Result<Membership> {
        let membership = st
            .partition_mut(scope)
            .memberships
            .get_mut(&target)
            .ok_or(PdsError::NotAMember)?;
        membership.status = status;
        let membership = membership.clone();
        if let Some(agent) = st.agents.get_mut(&target) {
            agent.active = false;
        }
        Ok(membership)
    }

    pub fn report_user(
        &self,
        actor: UserId,
        experiment: ExperimentId,
        target: UserId,
        reason: &str,
    ) -> Result<UserReport> {
        let now = self.now();
        let mut st = self.write();
        let scope = st.scope(experiment, actor)?;
        scope.authorize(Action::ReportUser)?;
        if target == actor {
            return Err(PdsError::SelfReport);
        }
        if st.partition(&scope).active_membership(target).is_none() {
            return Err(PdsError::NotAMember);
        }
        let reason = reason.trim();
        if reason.is_empty() {
            return Err(PdsError::EmptyReason);
        }
        if scalar_len(reason) > MAX_REPORT_REASON_CHARS {
            return Err(PdsError::FieldTooLong {
                field: "reason",
                max: MAX_REPORT_REASON_CHARS,
            });
        }
        let report = UserReport {
            id: st.ids.next_report(),
            experiment,
            reporter: actor,
            target,
            reason: reason.into(),
            created_at: now,
            resolved: false,
        };
        st.partition_mut(&scope)
            .reports
            .insert(report.id, report.clone());
        Ok(report)
    }

    /// Reports are visible to the owner and collaborators.
    pub fn reports(&self, scope: &ExperimentScope) -> Result<Vec<UserReport>> {
        if !scope.role().is_staff() {
            return Err(PdsError::forbidden(Some(scope.role()), "view_reports"));
        }
        Ok(self
            .read()
            .partition(scope)
            .reports
            .values()
            .cloned()
            .collect())
    }

    pub fn resolve_report(
        &self,
        actor: UserId,
        experiment: ExperimentId,
        report: ReportId,
    ) -> Result<UserReport> {
        let mut st = self.write();
        let scope = st.scope(experiment, actor)?;
        if !scope.role().is_staff() {
            return Err(PdsError::forbidden(Some(scope.role()), "resolve_report"));
        }
        let r = st
            .partition_mut(&scope)
            .reports
            .get_mut(&report)
            .ok_or(PdsError::ReportNotFound)?;
        r.resolved = true;
        Ok(r.clone())
    }

    pub fn members(&self, scope: &ExperimentScope) -> Vec<MemberView> {
        let st = self.read();
        let data = st.partition(scope);
        let reveal_agents = data.experiment.show_agent_badge || scope.role().is_staff();
        data.memberships
            .values()
            .filter_map(|m| {
                let account = st.accounts.get(&m.user)?;
                Some(MemberView {
                    user: m.user,
                    handle: account.handle.clone(),
                    display_name: account.display_name.clone(),
                    role: m.role,
                    status: m.status,
                    is_agent: reveal_agents.then_some(account.is_agent),
                    joined_at: m.joined_at,
                })
            })
            .collect()
    }

    /// Experiments the user belongs to plus pending invitations to their email.
    pub fn experiments_for(&self, user: UserId) -> Result<ExperimentListing> {
        let now = self.now();
        let st = self.read();
        let account = st.account(user)?;
        let memberships = st
            .experiments
            .values()
            .filter_map(|d| {
                d.memberships
                    .get(&user)
                    .filter(|m| m.status == MembershipStatus::Active)
                    .map(|m| (d.experiment.clone(), m.clone()))
            })
            .collect();
        let invitations = st
            .invitations
            .values()
            .filter(|i| {
                i.state == InvitationState::Pending
                    && i.expires_at > now
                    && account.email.as_deref() == Some(i.email.as_str())
            })
            .filter_map(|i| {
                let exp = &st.experiments.get(&i.experiment)?.experiment;
                Some(PendingInvitation {
                    token: i.token.clone(),
                    experiment: i.experiment,
                    title: exp.title.clone(),
                    description: exp.description.clone(),
                    role: i.role,
                    expires_at: i.expires_at,
                })
            })
            .collect();
        Ok(ExperimentListing {
            memberships,
            invitations,
        })
    }

    pub fn invitation(&self, token: &str) -> Result<Invitation> {
        self.read()
            .invitations
            .get(token)
            .cloned()
            .ok_or(PdsError::InvitationNotFound)
    }

    /// What the accept page shows: the experiment and role, not the address.
    /// Only pending, unexpired invitations are found.
    pub fn invitation_preview(&self, token: &str) -> Result<PendingInvitation> {
        let now = self.now();
        let st = self.read();
        let inv = st
            .invitations
            .get(token)
            .ok_or(PdsError::InvitationNotFound)?;
        match inv.state {
            InvitationState::Pending if inv.expires_at > now => {}
            InvitationState::Pending | InvitationState::Expired => return Err(PdsError::TokenExpired),
            InvitationState::Accepted => return Err(PdsError::TokenUsed),
            InvitationState::Revoked => return Err(PdsError::InvitationNotFound),
        }
        let exp = &st.experiment_data(inv.experiment)?.experiment;
        Ok(PendingInvitation {
            token: inv.token.clone(),
            experiment: inv.experiment,
            title: exp.title.clone(),
            description: exp.description.clone(),
            role: inv.role,
            expires_at: inv.expires_at,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{pdf, Fixture};

    #[test]
    fn create_requires_researcher_private_and_irb() {
        let f = Fixture::new();
        let researcher = f.researcher("res");
        let regular = f.user("reg");
        let new = |vis, irb: bool| NewExperiment {
            title: "T".into(),
            description: "D".into(),
            visibility: vis,
            irb_document: irb.then(pdf),
        };
        let exp = f
            .platform
            .create_experiment(researcher, new(Visibility::Private, true))
            .unwrap();
        assert_eq!(exp.owner, researcher);
        let scope = f.platform.scoped(exp.id, researcher).unwrap();
        assert_eq!(scope.role(), Role::Owner);
        assert_eq!(
            f.platform
                .create_experiment(researcher, new(Visibility::Public, true))
                .unwrap_err(),
            PdsError::PublicNotSupported
        );
        assert_eq!(
            f.platform
                .create_experiment(researcher, new(Visibility::Private, false))
                .unwrap_err(),
            PdsError::MissingIrbDocument
        );
        assert_eq!(
            f.platform
                .create_experiment(regular, new(Visibility::Private, true))
                .unwrap_err(),
            PdsError::NotResearcher
        );
    }

    #[test]
    fn invitation_permissions() {
        let f = Fixture::new();
        let owner = f.researcher("owner");
        let exp = f.experiment(owner, "S");
        let collab = f.member(exp, "collab", Role::Collaborator);
        let err = f
            .platform
            .invite(collab, exp, "x@example.org", Role::Collaborator)
            .unwrap_err();
        assert_eq!(
            err,
            PdsError::Forbidden {
                role: Some(Role::Collaborator),
                action: "invite_any_role".into()
            }
        );
        let inv = f
            .platform
            .invite(owner, exp, "y@example.org", Role::Collaborator)
            .unwrap();
        assert_eq!(inv.state, InvitationState::Pending);
        assert_eq!(inv.email_state, EmailState::Sent);
        assert!(f
            .platform
            .invite(collab, exp, "z@example.org", Role::ContentModerator)
            .is_ok());
        assert_eq!(
            f.platform
                .invite(owner, exp, "collab@example.org", Role::Regular)
                .unwrap_err(),
            PdsError::AlreadyMember
        );
        assert_eq!(
            f.platform
                .invite(owner, exp, "y@example.org", Role::Regular)
                .unwrap_err(),
            PdsError::DuplicatePendingInvitation
        );
        assert_eq!(
            f.platform
                .invite(owner, exp, "q@example.org", Role::Owner)
                .unwrap_err(),
            PdsError::InvalidRole
        );
    }

    #[test]
    fn invitation_email_contents() {
        let f = Fixture::new();
        let owner = f.researcher("owner");
        let exp = f.experiment(owner, "Counterspeech study");
        let inv = f
            .platform
            .invite(owner, exp, "new@example.org", Role::Regular)
            .unwrap();
        let mail = f.mail.sent().pop().unwrap();
        assert_eq!(mail.to, "new@example.org");
        assert_eq!(mail.kind, EmailKind::Invitation);
        assert!(mail.body.contains("Counterspeech study"));
        assert!(mail.body.contains("Description of Counterspeech study"));
        assert!(mail.body.contains("@owner"));
        assert!(mail
            .body
            .contains(&format!("http://localhost:8080/invitations/{}", inv.token)));
    }

    #[test]
    fn accept_is_single_use_email_bound_and_expires() {
        let f = Fixture::new();
        let owner = f.researcher("owner");
        let exp = f.experiment(owner, "S");
        let ada = f.user("ada");
        let bob = f.user("bob");
        let inv = f
            .platform
            .invite(owner, exp, "ada@example.org", Role::Regular)
            .unwrap();
        assert_eq!(
            f.platform.accept_invitation(&inv.token, bob).unwrap_err(),
            PdsError::EmailMismatch
        );
        let m = f.platform.accept_invitation(&inv.token, ada).unwrap();
        assert_eq!(m.status, MembershipStatus::Active);
        assert_eq!(m.role, Role::Regular);
        assert_eq!(
            f.platform.accept_invitation(&inv.token, ada).unwrap_err(),
            PdsError::TokenUsed
        );

        let late = f
            .platform
            .invite(owner, exp, "bob@example.org", Role::Regular)
            .unwrap();
        f.clock.advance(chrono::Duration::days(8));
        assert_eq!(
            f.platform.accept_invitation(&late.token, bob).unwrap_err(),
            PdsError::TokenExpired
        );
    }

    #[test]
    fn invitation_valid_until_seven_days() {
        let f = Fixture::new();
        let owner = f.researcher("owner");
        let exp = f.experiment(owner, "S");
        let bob = f.user("bob");
        let inv = f
            .platform
            .invite(owner, exp, "bob@example.org", Role::Regular)
            .unwrap();
        f.clock
            .advance(chrono::Duration::days(7) - chrono::Duration::seconds(1));
        assert!(f.platform.accept_invitation(&inv.token, bob).is_ok());
    }

    #[test]
    fn concurrent_accept_yields_one_success() {
        let f = Fixture::new();
        let owner = f.researcher("owner");
        let exp = f.experiment(owner, "S");
        let ada = f.user("ada");
        let inv = f
            .platform
            .invite(owner, exp, "ada@example.org", Role::Regular)
            .unwrap();
        let results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8)
                .map(|_| s.spawn(|| f.platform.accept_invitation(&inv.token, ada)))
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1);
        assert!(results
            .iter()
            .filter_map(|r| r.as_ref().err())
            .all(|e| *e == PdsError::TokenUsed));
    }

    #[test]
    fn removal_rules() {
        let f = Fixture::new();
        let owner = f.researcher("owner");
        let exp = f.experiment(owner, "S");
        let collab = f.member(exp, "collab", Role::Collaborator);
        let moder = f.member(exp, "moder", Role::ContentModerator);
        let r1 = f.member(exp, "reg1", Role::Regular);
        let r2 = f.member(exp, "reg2", Role::Regular);

        assert!(matches!(
            f.platform.remove_member(moder, exp, r1).unwrap_err(),
            PdsError::Forbidden { .. }
        ));
        for actor in [collab, moder, r1] {
            assert_eq!(
                f.platform.remove_member(actor, exp, owner).unwrap_err(),
                PdsError::CannotRemoveOwner
            );
        }
        assert!(matches!(
            f.platform.remove_member(collab, exp, moder).unwrap_err(),
            PdsError::Forbidden { .. }
        ));
        assert_eq!(
            f.platform.remove_member(collab, exp, r1).unwrap().status,
            MembershipStatus::Removed
        );
        assert_eq!(
            f.platform.remove_member(owner, exp, r1).unwrap_err(),
            PdsError::NotAMember
        );
        assert_eq!(
            f.platform.remove_member(owner, exp, moder).unwrap().status,
            MembershipStatus::Removed
        );
        let outsider = f.user("out");
        assert_eq!(
            f.platform.remove_member(owner, exp, outsider).unwrap_err(),
            PdsError::NotAMember
        );
        assert_eq!(f.platform.scoped(exp, r2).unwrap().role(), Role::Regular);
    }

    #[test]
    fn ban_rules() {
        let f = Fixture::new();
        let owner = f.researcher("owner");
        let exp = f.experiment(owner, "S");
        let collab = f.member(exp, "collab", Role::Collaborator);
        let moder = f.member(exp, "moder", Role::ContentModerator);
        let r1 = f.member(exp, "reg1", Role::Regular);
        let r2 = f.member(exp, "reg2", Role::Regular);

        assert_eq!(
            f.platform.ban_member(moder, exp, r1).unwrap().status,
            MembershipStatus::Banned
        );
        assert!(matches!(
            f.platform.ban_member(moder, exp, collab).unwrap_err(),
            PdsError::Forbidden { .. }
        ));
        assert!(matches!(
            f.platform.ban_member(r2, exp, r2).unwrap_err(),
            PdsError::Forbidden { .. }
        ));
        assert!(matches!(
            f.platform.ban_member(collab, exp, r2).unwrap_err(),
            PdsError::Forbidden { .. }
        ));
        // banned users can only be re-invited by the owner
        assert!(matches!(
            f.platform
                .invite(collab, exp, "reg1@example.org", Role::Regular)
                .unwrap_err(),
            PdsError::Forbidden { .. }
        ));
        let inv = f
            .platform
            .invite(owner, exp, "reg1@example.org", Role::Regular)
            .unwrap();
        assert_eq!(
            f.platform.scoped(exp, r1).unwrap_err(),
            PdsError::NotAMember
        );
        f.platform.accept_invitation(&inv.token, r1).unwrap();
        assert!(f.platform.scoped(exp, r1).is_ok());
    }

    #[test]
    fn report_rules() {
        let f = Fixture::new();
        let owner = f.researcher("owner");
        let exp = f.experiment(owner, "S");
        let r1 = f.member(exp, "reg1", Role::Regular);
        let r2 = f.member(exp, "reg2", Role::Regular);
        let outsider = f.user("out");
        let report = f.platform.report_user(r1, exp, r2, "derailing").unwrap();
        assert!(!report.resolved);
        assert_eq!(
            f.platform.report_user(r1, exp, r1, "x").unwrap_err(),
            PdsError::SelfReport
        );
        assert_eq!(
            f.platform.report_user(r1, exp, outsider, "x").unwrap_err(),
            PdsError::NotAMember
        );
        assert_eq!(
            f.platform.report_user(r1, exp, r2, "  ").unwrap_err(),
            PdsError::EmptyReason
        );
        let owner_scope = f.platform.scoped(exp, owner).unwrap();
        assert_eq!(f.platform.reports(&owner_scope).unwrap().len(), 1);
        let r1_scope = f.platform.scoped(exp, r1).unwrap();
        assert!(f.platform.reports(&r1_scope).is_err());
    }

    #[test]
    fn listing_shows_memberships_and_invitations() {
        let f = Fixture::new();
        let owner = f.researcher("owner");
        let a = f.experiment(owner, "A");
        let b = f.experiment(owner, "B");
        let ada = f.user("ada");
        f.add_member(a, ada, Role::Regular);
        f.platform
            .invite(owner, b, "ada@example.org", Role::Regular)
            .unwrap();
        let listing = f.platform.experiments_for(ada).unwrap();
        assert_eq!(listing.memberships.len(), 1);
        assert_eq!(listing.memberships[0].0.id, a);
        assert_eq!(listing.invitations.len(), 1);
        assert_eq!(listing.invitations[0].experiment, b);
    }
}
