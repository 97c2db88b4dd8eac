//! The static role/action matrix for experiment members.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Owner,
    Collaborator,
    ContentModerator,
    Regular,
}

impl Role {
    pub const ALL: [Role; 4] = [
        Role::Owner,
        Role::Collaborator,
        Role::ContentModerator,
        Role::Regular,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Owner => "owner",
            Role::Collaborator => "collaborator",
            Role::ContentModerator => "content_moderator",
            Role::Regular => "regular",
        }
    }

    /// Owner and collaborators run the study: exports, agents, reports.
    pub fn is_staff(self) -> bool {
        matches!(self, Role::Owner | Role::Collaborator)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    ConfigureExperiment,
    InviteAnyRole,
    InviteRegularOrModerator,
    RemoveRegular,
    DeleteThread,
    DeleteComment,
    BanRegular,
    ReportUser,
    Post,
    Interact,
}

impl Action {
    pub const ALL: [Action; 10] = [
        Action::ConfigureExperiment,
        Action::InviteAnyRole,
        Action::InviteRegularOrModerator,
        Action::RemoveRegular,
        Action::DeleteThread,
        Action::DeleteComment,
        Action::BanRegular,
        Action::ReportUser,
        Action::Post,
        Action::Interact,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::ConfigureExperiment => "configure_experiment",
            Action::InviteAnyRole => "invite_any_role",
            Action::InviteRegularOrModerator => "invite_regular_or_moderator",
            Action::RemoveRegular => "remove_regular",
            Action::DeleteThread => "delete_thread",
            Action::DeleteComment => "delete_comment",
            Action::BanRegular => "ban_regular",
            Action::ReportUser => "report_user",
            Action::Post => "post",
            Action::Interact => "interact",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Pure lookup in the permission matrix.
pub fn can(role: Role, action: Action) -> bool {
    use Action::*;
    match role {
        Role::Owner => true,
        Role::Collaborator => matches!(
            action,
            InviteRegularOrModerator
                | RemoveRegular
                | DeleteThread
                | DeleteComment
                | ReportUser
                | Post
                | Interact
        ),
        Role::ContentModerator => matches!(
            action,
            DeleteThread | DeleteComment | BanRegular | ReportUser | Post | Interact
        ),
        Role::Regular => matches!(action, ReportUser | Post | Interact),
    }
}
