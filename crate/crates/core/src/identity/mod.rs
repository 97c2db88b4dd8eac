//! Accounts, sessions, mandatory TOTP second factor, consent capture,
//! researcher-access requests and profiles.

pub mod password;
pub mod totp;

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{PdsError, Result};
use crate::ids::{random_token, DeviceId, MediaId, RequestId, UserId};
use crate::mail::{EmailKind, OutboundEmail};
use crate::store::media::MediaUpload;
use crate::store::{Platform, State};
use crate::text::scalar_len;

pub const MIN_PASSWORD_CHARS: usize = 10;
pub const MAX_DISPLAY_NAME_CHARS: usize = 50;
pub const MAX_BIO_CHARS: usize = 500;
pub const MAX_INTENT_CHARS: usize = 2000;
pub const MAX_RESEARCHER_FIELD_CHARS: usize = 200;
const RESET_TOKEN_TTL_MINUTES: i64 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountKind {
    Regular,
    Researcher,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountStatus {
    Active,
    Disabled,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserAccount {
    pub id: UserId,
    pub handle: String,
    /// Absent for agent accounts and for accounts restored from a bundle.
    pub email: Option<String>,
    pub password_digest: Option<String>,
    pub kind: AccountKind,
    pub is_admin: bool,
    pub is_agent: bool,
    pub display_name: String,
    pub bio: String,
    pub profile_photo: Option<MediaId>,
    pub banner_photo: Option<MediaId>,
    pub created_at: DateTime<Utc>,
    pub status: AccountStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsentKind {
    PlatformRules,
    ResearchParticipation,
}

impl ConsentKind {
    pub const REQUIRED: [ConsentKind; 2] = [
        ConsentKind::PlatformRules,
        ConsentKind::ResearchParticipation,
    ];
}

impl fmt::Display for ConsentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConsentKind::PlatformRules => "platform_rules",
            ConsentKind::ResearchParticipation => "research_participation",
        })
    }
}

/// A versioned consent document served to registrants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsentDocument {
    pub kind: ConsentKind,
    pub version: String,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsentCatalog {
    pub platform_rules: ConsentDocument,
    pub research_participation: ConsentDocument,
}

impl ConsentCatalog {
    pub fn get(&self, kind: ConsentKind) -> &ConsentDocument {
        match kind {
            ConsentKind::PlatformRules => &self.platform_rules,
            ConsentKind::ResearchParticipation => &self.research_participation,
        }
    }
}

impl Default for ConsentCatalog {
    fn default() -> Self {
        Self {
            platform_rules: ConsentDocument {
                kind: ConsentKind::PlatformRules,
                version: "1".into(),
                text: include_str!("../../assets/platform_rules.md").into(),
            },
            research_participation: ConsentDocument {
                kind: ConsentKind::ResearchParticipation,
                version: "1".into(),
                text: include_str!("../../assets/research_participation.md").into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsentRecord {
    pub user: UserId,
    pub document_kind: ConsentKind,
    pub document_version: String,
    pub accepted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestState {
    Pending,
    Approved,
    Rejected,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResearcherRequest {
    pub id: RequestId,
    pub user: UserId,
    pub position_title: String,
    pub institution: String,
    pub department: String,
    pub intent: String,
    pub state: RequestState,
    pub decided_by: Option<UserId>,
    pub decided_at: Option<DateTime<Utc>>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TotpDevice {
    pub id: DeviceId,
    pub user: UserId,
    pub label: String,
    #[serde(with = "base32_secret")]
    pub secret: Vec<u8>,
    pub confirmed: bool,
    pub created_at: DateTime<Utc>,
}

mod base32_secret {
    use data_encoding::BASE32_NOPAD;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(secret: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&BASE32_NOPAD.encode(secret))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        BASE32_NOPAD
            .decode(text.as_bytes())
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub user: UserId,
    pub second_factor_passed: bool,
    pub created_at: DateTime<Utc>,
    /// Slides forward on every authenticated use (idle expiry).
    pub expires_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct PasswordReset {
    pub user: UserId,
    pub expires_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Default)]
pub struct Registration {
    pub handle: String,
    pub email: String,
    pub password: String,
    pub display_name: String,
    pub consents: Vec<ConsentKind>,
}

#[derive(Debug, Clone, Default)]
pub struct ResearcherDetails {
    pub position_title: String,
    pub institution: String,
    pub department: String,
    pub intent: String,
}

#[derive(Debug, Clone, Default)]
pub struct ProfileUpdate {
    pub display_name: Option<String>,
    pub bio: Option<String>,
    pub profile_photo: Option<MediaUpload>,
    pub banner_photo: Option<MediaUpload>,
}

/// Result of resolving a session token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuthContext {
    pub user: UserId,
    pub second_factor_passed: bool,
}

pub fn normalize_handle(handle: &str) -> Result<String> {
    let handle = handle.trim().to_lowercase();
    let len = handle.len();
    let valid = (3..=32).contains(&len)
        && handle
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_');
    if valid {
        Ok(handle)
    } else {
        Err(PdsError::InvalidHandle)
    }
}

pub fn normalize_email(email: &str) -> Result<String> {
    let email = email.trim().to_lowercase();
    let mut parts = email.split('@');
    let ok = match (parts.next(), parts.next(), parts.next()) {
        (Some(local), Some(domain), None) => {
            !local.is_empty()
                && !domain.is_empty()
                && !domain.starts_with('.')
                && !domain.ends_with('.')
                && !email.chars().any(char::is_whitespace)
        }
        _ => false,
    };
    if ok && email.len() <= 254 {
        Ok(email)
    } else {
        Err(PdsError::InvalidEmail)
    }
}

fn check_len(field: &'static str, value: &str, max: usize) -> Result<()> {
    if scalar_len(value) > max {
        Err(PdsError::FieldTooLong { field, max })
    } else {
        Ok(())
    }
}

struct ValidRegistration {
    handle: String,
    email: String,
    display_name: String,
}

fn validate_registration(reg: &Registration) -> Result<ValidRegistration> {
    let handle = normalize_handle(&reg.handle)?;
    let email = normalize_email(&reg.email)?;
    if scalar_len(&reg.password) < MIN_PASSWORD_CHARS {
        return Err(PdsError::WeakPassword {
            min: MIN_PASSWORD_CHARS,
        });
    }
    let display_name = reg.display_name.trim().to_string();
    check_len("display_name", &display_name, MAX_DISPLAY_NAME_CHARS)?;
    for kind in ConsentKind::REQUIRED {
        if !reg.consents.contains(&kind) {
            return Err(PdsError::MissingConsent(kind));
        }
    }
    Ok(ValidRegistration {
        display_name: if display_name.is_empty() {
            handle.clone()
        } else {
            display_name
        },
        handle,
        email,
    })
}

impl State {
    pub(crate) fn account(&self, user: UserId) -> Result<&UserAccount> {
        self.accounts.get(&user).ok_or(PdsError::UserNotFound)
    }

    pub(crate) fn account_mut(&mut self, user: UserId) -> Result<&mut UserAccount> {
        self.accounts.get_mut(&user).ok_or(PdsError::UserNotFound)
    }

    pub(crate) fn handle_of(&self, user: UserId) -> &str {
        self.accounts
            .get(&user)
            .map(|a| a.handle.as_str())
            .unwrap_or("unknown")
    }

    /// Inserts an account, enforcing handle/email uniqueness in the same critical section.
    pub(crate) fn insert_account(&mut self, mut account: UserAccount) -> Result<UserId> {
        if self.handles.contains_key(&account.handle) {
            return Err(PdsError::DuplicateHandle);
        }
        if let Some(email) = &account.email {
            if self.emails.contains_key(email) {
                return Err(PdsError::DuplicateEmail);
            }
        }
        if account.id.0 == 0 {
            account.id = self.ids.next_user();
        } else {
            self.ids.observe_user(account.id);
        }
        let id = account.id;
        self.handles.insert(account.handle.clone(), id);
        if let Some(email) = &account.email {
            self.emails.insert(email.clone(), id);
        }
        self.accounts.insert(id, account);
        Ok(id)
    }

    fn record_consent(&mut self, user: UserId, doc: &ConsentDocument, at: DateTime<Utc>) {
        let exists = self.consents.iter().any(|c| {
            c.user == user && c.document_kind == doc.kind && c.document_version == doc.version
        });
        if !exists {
            self.consents.push(ConsentRecord {
                user,
                document_kind: doc.kind,
                document_version: doc.version.clone(),
                accepted_at: at,
            });
        }
    }

    pub(crate) fn outdated_consents(
        &self,
        user: UserId,
        catalog: &ConsentCatalog,
    ) -> Vec<ConsentKind> {
        ConsentKind::REQUIRED
            .into_iter()
            .filter(|kind| {
                let current = &catalog.get(*kind).version;
                !self.consents.iter().any(|c| {
                    c.user == user && c.document_kind == *kind && &c.document_version == current
                })
            })
            .collect()
    }
}

impl Platform {
    /// Creates a regular account. Both consent documents must be accepted.
    pub fn register(&self, reg: Registration) -> Result<UserAccount> {
        let valid = validate_registration(&reg)?;
        let digest = password::hash_password(&reg.password, self.config.password_cost);
        let mut st = self.write();
        self.register_locked(&mut st, valid, digest, false)
    }

    fn register_locked(
        &self,
        st: &mut State,
        valid: ValidRegistration,
        digest: String,
        is_admin: bool,
    ) -> Result<UserAccount> {
        let now = self.now();
        let account = UserAccount {
            id: UserId(0),
            handle: valid.handle,
            email: Some(valid.email),
            password_digest: Some(digest),
            kind: AccountKind::Regular,
            is_admin,
            is_agent: false,
            display_name: valid.display_name,
            bio: String::new(),
            profile_photo: None,
            banner_photo: None,
            created_at: now,
            status: AccountStatus::Active,
        };
        let id = st.insert_account(account)?;
        for kind in ConsentKind::REQUIRED {
            st.record_consent(id, self.config.consent.get(kind), now);
        }
        Ok(st.accounts[&id].clone())
    }

    /// Registers a regular account plus a pending request for researcher access.
    pub fn request_researcher_access(
        &self,
        reg: Registration,
        details: ResearcherDetails,
    ) -> Result<(UserAccount, ResearcherRequest)> {
        let valid = validate_registration(&reg)?;
        for (field, value) in [
            ("position_title", &details.position_title),
            ("institution", &details.institution),
            ("department", &details.department),
            ("intent", &details.intent),
        ] {
            if value.trim().is_empty() {
                return Err(PdsError::EmptyResearcherField(field));
            }
        }
        check_len(
            "position_title",
            &details.position_title,
            MAX_RESEARCHER_FIELD_CHARS,
        )?;
        check_len(
            "institution",
            &details.institution,
            MAX_RESEARCHER_FIELD_CHARS,
        )?;
        check_len(
            "department",
            &details.department,
            MAX_RESEARCHER_FIELD_CHARS,
        )?;
        check_len("intent", &details.intent, MAX_INTENT_CHARS)?;

        let digest = password::hash_password(&reg.password, self.config.password_cost);
        let mut st = self.write();
        let account = self.register_locked(&mut st, valid, digest, false)?;
        let request = ResearcherRequest {
            id: st.ids.next_request(),
            user: account.id,
            position_title: details.position_title.trim().into(),
            institution: details.institution.trim().into(),
            department: details.department.trim().into(),
            intent: details.intent.trim().into(),
            state: RequestState::Pending,
            decided_by: None,
            decided_at: None,
            created_at: self.now(),
        };
        st.researcher_requests.insert(request.id, request.clone());
        Ok((account, request))
    }

    /// Seeds a platform administrator. Used at deploy time only.
    pub fn seed_admin(&self, reg: Registration) -> Result<UserAccount> {
        let valid = validate_registration(&Registration {
            consents: ConsentKind::REQUIRED.to_vec(),
            ..reg.clone()
        })?;
        let digest = password::hash_password(&reg.password, self.config.password_cost);
        let mut st = self.write();
        self.register_locked(&mut st, valid, digest, true)
    }

    pub fn researcher_requests(
        &self,
        admin: UserId,
        state: Option<RequestState>,
    ) -> Result<Vec<ResearcherRequest>> {
        let st = self.read();
        if !st.account(admin)?.is_admin {
            return Err(PdsError::NotAdmin);
        }
        Ok(st
            .researcher_requests
            .values()
            .filter(|r| state.is_none_or(|s| r.state == s))
            .cloned()
            .collect())
    }

    pub fn decide_researcher_request(
        &self,
        admin: UserId,
        request: RequestId,
        approve: bool,
    ) -> Result<ResearcherRequest> {
        let now = self.now();
        let mut st = self.write();
        if !st.account(admin)?.is_admin {
            return Err(PdsError::NotAdmin);
        }
        let req = st
            .researcher_requests
            .get_mut(&request)
            .ok_or(PdsError::RequestNotFound)?;
        if req.state != RequestState::Pending {
            return Err(PdsError::AlreadyDecided);
        }
        req.state = if approve {
            RequestState::Approved
        } else {
            RequestState::Rejected
        };
        req.decided_by = Some(admin);
        req.decided_at = Some(now);
        let req = req.clone();
        if approve {
            st.account_mut(req.user)?.kind = AccountKind::Researcher;
        }
        Ok(req)
    }

    pub fn account(&self, user: UserId) -> Result<UserAccount> {
        self.read().account(user).cloned()
    }

    pub fn account_by_handle(&self, handle: &str) -> Result<UserAccount> {
        let st = self.read();
        let id = st
            .handles
            .get(&handle.trim().to_lowercase())
            .ok_or(PdsError::UserNotFound)?;
        st.account(*id).cloned()
    }

    /// First factor. The returned session is limited to 2FA endpoints.
    pub fn login(&self, handle_or_email: &str, password: &str) -> Result<Session> {
        let key = handle_or_email.trim().to_lowercase();
        let (user, digest) = {
            let st = self.read();
            let id = if key.contains('@') {
                st.emails.get(&key)
            } else {
                st.handles.get(&key)
            }
            .copied()
            .ok_or(PdsError::BadCredentials)?;
            let account = st.account(id)?;
            if account.status != AccountStatus::Active || account.is_agent {
                return Err(PdsError::BadCredentials);
            }
            (
                id,
                account
                    .password_digest
                    .clone()
                    .ok_or(PdsError::BadCredentials)?,
            )
        };
        if !password::verify_password(password, &digest) {
            return Err(PdsError::BadCredentials);
        }
        let mut st = self.write();
        Ok(self.new_session(&mut st, user, false))
    }

    fn new_session(&self, st: &mut State, user: UserId, second_factor_passed: bool) -> Session {
        let now = self.now();
        let session = Session {
            token: random_token(32),
            user,
            second_factor_passed,
            created_at: now,
            expires_at: now + self.config.session_idle,
        };
        st.sessions.insert(session.token.clone(), session.clone());
        session
    }

    /// Resolves a token; expired sessions are removed and rejected.
    pub fn authenticate(&self, token: &str) -> Result<AuthContext> {
        let now = self.now();
        let idle = self.config.session_idle;
        let mut st = self.state.write();
        let Some(session) = st.sessions.get_mut(token) else {
            return Err(PdsError::Unauthorized);
        };
        if session.expires_at <= now {
            st.sessions.remove(token);
            return Err(PdsError::Unauthorized);
        }
        session.expires_at = now + idle;
        let ctx = AuthContext {
            user: session.user,
            second_factor_passed: session.second_factor_passed,
        };
        match st.accounts.get(&ctx.user) {
            Some(a) if a.status == AccountStatus::Active => Ok(ctx),
            _ => Err(PdsError::Unauthorized),
        }
    }

    /// Gate for every non-auth operation: a live session that passed the
    /// second factor, with consents at their current versions.
    pub fn require_full_session(&self, token: &str) -> Result<UserId> {
        let ctx = self.authenticate(token)?;
        if !ctx.second_factor_passed {
            return Err(PdsError::SecondFactorRequired);
        }
        let outdated = self
            .read()
            .outdated_consents(ctx.user, &self.config.consent);
        if !outdated.is_empty() {
            return Err(PdsError::ConsentRequired(outdated));
        }
        Ok(ctx.user)
    }

    pub fn logout(&self, token: &str) {
        self.write().sessions.remove(token);
    }

    /// Starts TOTP enrollment; returns the unconfirmed device and its provisioning URI.
    pub fn enroll_totp(&self, user: UserId, label: &str) -> Result<(TotpDevice, String)> {
        let label = label.trim();
        check_len("label", label, 64)?;
        let mut st = self.write();
        let handle = st.account(user)?.handle.clone();
        let device = TotpDevice {
            id: st.ids.next_device(),
            user,
            label: if label.is_empty() {
                "authenticator".into()
            } else {
                label.into()
            },
            secret: totp::generate_secret(),
            confirmed: false,
            created_at: self.now(),
        };
        let uri = totp::provisioning_uri(&handle, &device.secret);
        st.devices.insert(device.id, device.clone());
        Ok((device, uri))
    }

    pub fn confirm_totp(&self, user: UserId, device: DeviceId, code: &str) -> Result<TotpDevice> {
        let now = self.now().timestamp().max(0) as u64;
        let mut st = self.write();
        let dev = st
            .devices
            .get_mut(&device)
            .filter(|d| d.user == user)
            .ok_or(PdsError::UnknownDevice)?;
        if !totp::verify(&dev.secret, code, now) {
            return Err(PdsError::BadCode);
        }
        dev.confirmed = true;
        Ok(dev.clone())
    }

    pub fn totp_devices(&self, user: UserId) -> Vec<TotpDevice> {
        self.read()
            .devices
            .values()
            .filter(|d| d.user == user)
            .cloned()
            .collect()
    }

    /// Second factor. On success the old token is retired and a full session issued.
    pub fn verify_second_factor(&self, token: &str, code: &str) -> Result<Session> {
        let ctx = self.authenticate(token)?;
        let now = self.now().timestamp().max(0) as u64;
        let mut st = self.write();
        let mut confirmed = st
            .devices
            .values()
            .filter(|d| d.user == ctx.user && d.confirmed)
            .peekable();
        if confirmed.peek().is_none() {
            return Err(PdsError::SecondFactorRequired);
        }
        if !confirmed.any(|d| totp::verify(&d.secret, code, now)) {
            return Err(PdsError::BadCode);
        }
        st.sessions.remove(token);
        Ok(self.new_session(&mut st, ctx.user, true))
    }

    pub fn outdated_consents(&self, user: UserId) -> Vec<ConsentKind> {
        self.read().outdated_consents(user, &self.config.consent)
    }

    /// Records acceptance of the current versions of `kinds`.
    pub fn accept_consents(
        &self,
        user: UserId,
        kinds: &[ConsentKind],
    ) -> Result<Vec<ConsentRecord>> {
        let now = self.now();
        let mut st = self.write();
        st.account(user)?;
        for kind in kinds {
            st.record_consent(user, self.config.consent.get(*kind), now);
        }
        Ok(st
            .consents
            .iter()
            .filter(|c| c.user == user)
            .cloned()
            .collect())
    }

    pub fn consent_records(&self, user: UserId) -> Vec<ConsentRecord> {
        self.read()
            .consents
            .iter()
            .filter(|c| c.user == user)
            .cloned()
            .collect()
    }

    /// Applies only the provided fields.
    pub fn update_profile(&self, user: UserId, update: ProfileUpdate) -> Result<UserAccount> {
        if let Some(name) = &update.display_name {
            check_len("display_name", name.trim(), MAX_DISPLAY_NAME_CHARS)?;
        }
        if let Some(bio) = &update.bio {
            check_len("bio", bio, MAX_BIO_CHARS)?;
        }
        for upload in [&update.profile_photo, &update.banner_photo]
            .into_iter()
            .flatten()
        {
            upload.validate_image()?;
        }
        let now = self.now();
        let mut st = self.write();
        st.account(user)?;
        let profile_photo = update.profile_photo.map(|m| st.store_media(user, m, now));
        let banner_photo = update.banner_photo.map(|m| st.store_media(user, m, now));
        let account = st.account_mut(user)?;
        if let Some(name) = update.display_name {
            account.display_name = name.trim().into();
        }
        if let Some(bio) = update.bio {
            account.bio = bio;
        }
        if profile_photo.is_some() {
            account.profile_photo = profile_photo;
        }
        if banner_photo.is_some() {
            account.banner_photo = banner_photo;
        }
        Ok(account.clone())
    }

    /// Emails a single-use reset link when the address is registered.
    /// Always succeeds so the endpoint does not reveal which emails exist.
    pub fn request_password_reset(&self, email: &str) -> Result<()> {
        let Ok(email) = normalize_email(email) else {
            return Ok(());
        };
        let now = self.now();
        let message = {
            let mut st = self.write();
            let Some(&user) = st.emails.get(&email) else {
                return Ok(());
            };
            let token = random_token(32);
            st.reset_tokens.insert(
                token.clone(),
                PasswordReset {
                    user,
                    expires_at: now + chrono::Duration::minutes(RESET_TOKEN_TTL_MINUTES),
                },
            );
            OutboundEmail::new(
                email,
                "Reset your sandbox password".into(),
                format!(
                    "A password reset was requested for @{}.\n\nReset link (valid {} minutes): {}/reset-password?token={}\n",
                    st.handle_of(user),
                    RESET_TOKEN_TTL_MINUTES,
                    self.config.base_url.trim_end_matches('/'),
                    token
                ),
                EmailKind::PasswordReset,
                now,
            )
        };
        self.send_email(message);
        Ok(())
    }

    /// Consumes a reset token, sets the password and ends all of the user's sessions.
    pub fn reset_password(&self, token: &str, new_password: &str) -> Result<()> {
        if scalar_len(new_password) < MIN_PASSWORD_CHARS {
            return Err(PdsError::WeakPassword {
                min: MIN_PASSWORD_CHARS,
            });
        }
        let digest = password::hash_password(new_password, self.config.password_cost);
        let now = self.now();
        let mut st = self.write();
        let reset = st
            .reset_tokens
            .remove(token)
            .filter(|r| r.expires_at > now)
            .ok_or(PdsError::ResetTokenInvalid)?;
        st.account_mut(reset.user)?.password_digest = Some(digest);
        st.sessions.retain(|_, s| s.user != reset.user);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{reg, Fixture};

    #[test]
    fn register_happy_path() {
        let f = Fixture::new();
        let acct = f.platform.register(reg("ada")).unwrap();
        assert_eq!(acct.kind, AccountKind::Regular);
        assert_eq!(acct.email.as_deref(), Some("ada@example.org"));
        assert_eq!(acct.created_at, f.clock.now());
        assert_eq!(f.platform.consent_records(acct.id).len(), 2);
    }

    #[test]
    fn register_duplicate_handle_and_email() {
        let f = Fixture::new();
        f.platform.register(reg("ada")).unwrap();
        assert_eq!(
            f.platform.register(reg("ada")).unwrap_err(),
            PdsError::DuplicateHandle
        );
        let mut other = reg("ada2");
        other.email = "ADA@example.org".into();
        assert_eq!(
            f.platform.register(other).unwrap_err(),
            PdsError::DuplicateEmail
        );
        let mut upper = reg("x");
        upper.handle = "ADA".into();
        upper.email = "other@example.org".into();
        assert_eq!(
            f.platform.register(upper).unwrap_err(),
            PdsError::DuplicateHandle
        );
    }

    #[test]
    fn register_requires_both_consents() {
        let f = Fixture::new();
        let mut r = reg("ada");
        r.consents = vec![ConsentKind::PlatformRules];
        assert_eq!(
            f.platform.register(r).unwrap_err(),
            PdsError::MissingConsent(ConsentKind::ResearchParticipation)
        );
    }

    #[test]
    fn register_validates_fields() {
        let f = Fixture::new();
        let mut r = reg("ada");
        r.password = "short-pw9".into();
        assert_eq!(
            f.platform.register(r).unwrap_err(),
            PdsError::WeakPassword { min: 10 }
        );
        let mut r = reg("ada");
        r.handle = "a!".into();
        assert_eq!(f.platform.register(r).unwrap_err(), PdsError::InvalidHandle);
        let mut r = reg("ada");
        r.email = "not-an-email".into();
        assert_eq!(f.platform.register(r).unwrap_err(), PdsError::InvalidEmail);
    }

    #[test]
    fn researcher_request_lifecycle() {
        let f = Fixture::new();
        let admin = f.admin();
        let details = ResearcherDetails {
            position_title: "Postdoc".into(),
            institution: "Uni".into(),
            department: "CS".into(),
            intent: "Study counterspeech".into(),
        };
        let mut empty = details.clone();
        empty.intent = "  ".into();
        assert_eq!(
            f.platform
                .request_researcher_access(reg("bob"), empty)
                .unwrap_err(),
            PdsError::EmptyResearcherField("intent")
        );
        let (acct, req) = f
            .platform
            .request_researcher_access(reg("bob"), details.clone())
            .unwrap();
        assert_eq!(req.state, RequestState::Pending);
        assert_eq!(acct.kind, AccountKind::Regular);

        assert_eq!(
            f.platform
                .decide_researcher_request(acct.id, req.id, true)
                .unwrap_err(),
            PdsError::NotAdmin
        );
        let decided = f
            .platform
            .decide_researcher_request(admin, req.id, true)
            .unwrap();
        assert_eq!(decided.state, RequestState::Approved);
        assert_eq!(
            f.platform.account(acct.id).unwrap().kind,
            AccountKind::Researcher
        );
        assert_eq!(
            f.platform
                .decide_researcher_request(admin, req.id, false)
                .unwrap_err(),
            PdsError::AlreadyDecided
        );

        let (carol, req2) = f
            .platform
            .request_researcher_access(reg("carol"), details)
            .unwrap();
        let rejected = f
            .platform
            .decide_researcher_request(admin, req2.id, false)
            .unwrap();
        assert_eq!(rejected.state, RequestState::Rejected);
        assert_eq!(
            f.platform.account(carol.id).unwrap().kind,
            AccountKind::Regular
        );
    }

    #[test]
    fn totp_confirmation_rules() {
        let f = Fixture::new();
        let ada = f.platform.register(reg("ada")).unwrap();
        let bob = f.platform.register(reg("bob")).unwrap();
        let (dev, uri) = f.platform.enroll_totp(ada.id, "phone").unwrap();
        assert!(uri.starts_with("otpauth://totp/PDS:ada?secret="));
        assert!(uri.ends_with("&period=30&digits=6"));

        let now = f.clock.now().timestamp() as u64;
        let stale = totp::code_at(&dev.secret, now - 60);
        assert_ne!(stale, totp::code_at(&dev.secret, now));
        assert_eq!(
            f.platform.confirm_totp(ada.id, dev.id, &stale).unwrap_err(),
            PdsError::BadCode
        );
        let current = totp::code_at(&dev.secret, now);
        assert_eq!(
            f.platform
                .confirm_totp(bob.id, dev.id, &current)
                .unwrap_err(),
            PdsError::UnknownDevice
        );
        assert!(
            f.platform
                .confirm_totp(ada.id, dev.id, &current)
                .unwrap()
                .confirmed
        );
    }

    #[test]
    fn login_requires_second_factor() {
        let f = Fixture::new();
        let ada = f.platform.register(reg("ada")).unwrap();
        assert_eq!(
            f.platform.login("ada", "wrong-password").unwrap_err(),
            PdsError::BadCredentials
        );
        let limited = f
            .platform
            .login("ADA@example.org", "correct-horse-9")
            .unwrap();
        assert!(!limited.second_factor_passed);
        assert_eq!(
            f.platform.require_full_session(&limited.token).unwrap_err(),
            PdsError::SecondFactorRequired
        );
        // no confirmed device yet
        assert_eq!(
            f.platform
                .verify_second_factor(&limited.token, "000000")
                .unwrap_err(),
            PdsError::SecondFactorRequired
        );
        let (dev, _) = f.platform.enroll_totp(ada.id, "phone").unwrap();
        let code = totp::code_at(&dev.secret, f.clock.now().timestamp() as u64);
        f.platform.confirm_totp(ada.id, dev.id, &code).unwrap();
        assert_eq!(
            f.platform
                .verify_second_factor(&limited.token, "000000")
                .unwrap_err(),
            PdsError::BadCode
        );
        let full = f
            .platform
            .verify_second_factor(&limited.token, &code)
            .unwrap();
        assert!(full.second_factor_passed);
        assert_ne!(full.token, limited.token);
        assert_eq!(
            f.platform.require_full_session(&full.token).unwrap(),
            ada.id
        );
        assert_eq!(
            f.platform.authenticate(&limited.token).unwrap_err(),
            PdsError::Unauthorized
        );
    }

    #[test]
    fn sessions_expire_after_idle_day() {
        let f = Fixture::new();
        let ada = f.user("ada");
        let token = f.session(ada);
        f.clock.advance_secs(23 * 3600);
        assert!(f.platform.require_full_session(&token).is_ok());
        f.clock.advance_secs(23 * 3600);
        assert!(f.platform.require_full_session(&token).is_ok());
        f.clock.advance_secs(24 * 3600 + 1);
        assert_eq!(
            f.platform.require_full_session(&token).unwrap_err(),
            PdsError::Unauthorized
        );
    }

    #[test]
    fn profile_update_bounds() {
        let f = Fixture::new();
        let ada = f.platform.register(reg("ada")).unwrap();
        let ok = f
            .platform
            .update_profile(
                ada.id,
                ProfileUpdate {
                    bio: Some("b".repeat(500)),
                    ..Default::default()
                },
            )
            .unwrap();
        assert_eq!(ok.bio.len(), 500);
        assert_eq!(ok.display_name, "Ada");
        let err = f
            .platform
            .update_profile(
                ada.id,
                ProfileUpdate {
                    bio: Some("b".repeat(501)),
                    ..Default::default()
                },
            )
            .unwrap_err();
        assert_eq!(
            err,
            PdsError::FieldTooLong {
                field: "bio",
                max: 500
            }
        );

        let mut big = b"\x89PNG\r\n\x1a\n".to_vec();
        big.resize(3 * 1024 * 1024, 0);
        let err = f
            .platform
            .update_profile(
                ada.id,
                ProfileUpdate {
                    profile_photo: Some(MediaUpload::new("image/png", big)),
                    ..Default::default()
                },
            )
            .unwrap_err();
        assert!(matches!(err, PdsError::MediaTooLarge { .. }));

        let gif = MediaUpload::new("image/gif", b"GIF89a....".to_vec());
        assert!(matches!(
            f.platform
                .update_profile(
                    ada.id,
                    ProfileUpdate {
                        banner_photo: Some(gif),
                        ..Default::default()
                    }
                )
                .unwrap_err(),
            PdsError::UnsupportedMediaType(_)
        ));

        let png = MediaUpload::new("image/png", b"\x89PNG\r\n\x1a\nrest".to_vec());
        let updated = f
            .platform
            .update_profile(
                ada.id,
                ProfileUpdate {
                    profile_photo: Some(png),
                    ..Default::default()
                },
            )
            .unwrap();
        assert!(updated.profile_photo.is_some());
        assert_eq!(updated.bio.len(), 500);
    }

    #[test]
    fn consent_version_bump_requires_reacceptance() {
        let mut catalog = ConsentCatalog::default();
        let f = Fixture::new();
        let ada = f.user("ada");
        catalog.research_participation.version = "2".into();
        let p2 = f.rebuild_with_consent(catalog);
        let token = p2.session(ada);
        assert_eq!(
            p2.platform.require_full_session(&token).unwrap_err(),
            PdsError::ConsentRequired(vec![ConsentKind::ResearchParticipation])
        );
        p2.platform
            .accept_consents(ada, &[ConsentKind::ResearchParticipation])
            .unwrap();
        assert!(p2.platform.require_full_session(&token).is_ok());
        assert_eq!(p2.platform.consent_records(ada).len(), 3);
    }

    #[test]
    fn password_reset_flow() {
        let f = Fixture::new();
        let ada = f.user("ada");
        let token = f.session(ada);
        f.platform
            .request_password_reset("ada@example.org")
            .unwrap();
        f.platform
            .request_password_reset("nobody@example.org")
            .unwrap();
        let sent = f.mail.sent();
        assert_eq!(sent.len(), 1);
        let reset = sent[0]
            .body
            .split("token=")
            .nth(1)
            .unwrap()
            .trim()
            .to_string();
        assert_eq!(
            f.platform.reset_password(&reset, "short").unwrap_err(),
            PdsError::WeakPassword { min: 10 }
        );
        f.platform
            .reset_password(&reset, "another-horse-10")
            .unwrap();
        assert_eq!(
            f.platform
                .reset_password(&reset, "another-horse-10")
                .unwrap_err(),
            PdsError::ResetTokenInvalid
        );
        assert!(f.platform.login("ada", "another-horse-10").is_ok());
        assert_eq!(
            f.platform.authenticate(&token).unwrap_err(),
            PdsError::Unauthorized
        );
    }
}
