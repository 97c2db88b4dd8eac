use axum::extract::State;
use axum::http::header::CONTENT_TYPE;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Extension;
use chrono::{DateTime, Utc};
use pds_core::identity::{
    totp, AccountKind, ConsentKind, ProfileUpdate, Registration, RequestState, ResearcherDetails,
    UserAccount,
};
use pds_core::store::media::{decode_base64, MediaUpload};
use pds_core::{DeviceId, MediaId, RequestId, UserId};
use serde::{Deserialize, Serialize};

use super::{created, ok, AppState, Body, Caller, PathArgs, QueryArgs};
use crate::error::ApiResult;

/// Media as carried in JSON bodies.
#[derive(Debug, Deserialize)]
pub struct MediaBody {
    pub content_type: String,
    /// Base64, standard alphabet.
    pub data: String,
}

impl MediaBody {
    pub fn decode(self) -> pds_core::Result<MediaUpload> {
        Ok(MediaUpload::new(&self.content_type, decode_base64(&self.data)?))
    }
}

/// An account as other members see it.
#[derive(Debug, Serialize)]
pub struct ProfileView {
    pub id: UserId,
    pub handle: String,
    pub display_name: String,
    pub bio: String,
    pub kind: AccountKind,
    pub profile_photo: Option<MediaId>,
    pub banner_photo: Option<MediaId>,
    pub created_at: DateTime<Utc>,
}

impl From<&UserAccount> for ProfileView {
    fn from(a: &UserAccount) -> Self {
        Self {
            id: a.id,
            handle: a.handle.clone(),
            display_name: a.display_name.clone(),
            bio: a.bio.clone(),
            kind: a.kind,
            profile_photo: a.profile_photo,
            banner_photo: a.banner_photo,
            created_at: a.created_at,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct DeviceView {
    pub id: DeviceId,
    pub label: String,
    pub confirmed: bool,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Serialize)]
pub struct SelfView {
    #[serde(flatten)]
    pub profile: ProfileView,
    pub email: Option<String>,
    pub is_admin: bool,
    pub devices: Vec<DeviceView>,
    pub outdated_consents: Vec<ConsentKind>,
}

#[derive(Debug, Deserialize)]
pub struct RegisterBody {
    pub handle: String,
    pub email: String,
    pub password: String,
    #[serde(default)]
    pub display_name: Option<String>,
    #[serde(default)]
    pub consents: Vec<ConsentKind>,
}

impl RegisterBody {
    fn into_registration(self) -> Registration {
        Registration {
            display_name: self.display_name.unwrap_or_else(|| self.handle.clone()),
            handle: self.handle,
            email: self.email,
            password: self.password,
            consents: self.consents,
        }
    }
}

pub async fn consent_documents(State(state): State<AppState>) -> Response {
    let catalog = &state.platform.config().consent;
    ok(ConsentKind::REQUIRED.map(|k| catalog.get(k).clone()))
}

pub async fn register(State(state): State<AppState>, Body(body): Body<RegisterBody>) -> ApiResult<Response> {
    let account = state.run(move |p| p.register(body.into_registration())).await?;
    Ok(created(ProfileView::from(&account)))
}

#[derive(Debug, Deserialize)]
pub struct ResearcherBody {
    #[serde(flatten)]
    pub account: RegisterBody,
    pub position_title: String,
    pub institution: String,
    pub department: String,
    pub intent: String,
}

pub async fn researcher_request(
    State(state): State<AppState>,
    Body(body): Body<ResearcherBody>,
) -> ApiResult<Response> {
    let details = ResearcherDetails {
        position_title: body.position_title,
        institution: body.institution,
        department: body.department,
        intent: body.intent,
    };
    let reg = body.account.into_registration();
    let (account, request) = state
        .run(move |p| p.request_researcher_access(reg, details))
        .await?;
    Ok(created(serde_json::json!({
        "account": ProfileView::from(&account),
        "request": request,
    })))
}

#[derive(Debug, Deserialize)]
pub struct LoginBody {
    #[serde(alias = "handle", alias = "email")]
    pub login: String,
    pub password: String,
}

#[derive(Debug, Serialize)]
pub struct SessionView {
    pub token: String,
    pub user: UserId,
    pub second_factor_passed: bool,
    pub expires_at: DateTime<Utc>,
    /// Whether a confirmed TOTP device exists; if not, enroll first.
    pub has_confirmed_device: bool,
    pub outdated_consents: Vec<ConsentKind>,
}

pub async fn login(State(state): State<AppState>, Body(body): Body<LoginBody>) -> ApiResult<Response> {
    let view = state
        .run(move |p| {
            let s = p.login(&body.login, &body.password)?;
            Ok(SessionView {
                has_confirmed_device: p.totp_devices(s.user).iter().any(|d| d.confirmed),
                outdated_consents: p.outdated_consents(s.user),
                token: s.token,
                user: s.user,
                second_factor_passed: s.second_factor_passed,
                expires_at: s.expires_at,
            })
        })
        .await?;
    Ok(ok(view))
}

#[derive(Debug, Deserialize)]
pub struct EnrollBody {
    #[serde(default)]
    pub label: String,
}

pub async fn enroll(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    Body(body): Body<EnrollBody>,
) -> ApiResult<Response> {
    let (device, uri) = state
        .run(move |p| p.enroll_totp(caller.user, &body.label))
        .await?;
    Ok(created(serde_json::json!({
        "device_id": device.id,
        "label": device.label,
        "secret": totp::encode_secret(&device.secret),
        "provisioning_uri": uri,
    })))
}

#[derive(Debug, Deserialize)]
pub struct VerifyBody {
    pub code: String,
    /// Set while enrolling: confirms this device with the same code.
    #[serde(default)]
    pub device_id: Option<DeviceId>,
}

pub async fn verify(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    Body(body): Body<VerifyBody>,
) -> ApiResult<Response> {
    let view = state
        .run(move |p| {
            if let Some(device) = body.device_id {
                p.confirm_totp(caller.user, device, &body.code)?;
            }
            let s = p.verify_second_factor(&caller.token, &body.code)?;
            Ok(SessionView {
                has_confirmed_device: true,
                outdated_consents: p.outdated_consents(s.user),
                token: s.token,
                user: s.user,
                second_factor_passed: s.second_factor_passed,
                expires_at: s.expires_at,
            })
        })
        .await?;
    Ok(ok(view))
}

pub async fn logout(State(state): State<AppState>, Extension(caller): Extension<Caller>) -> ApiResult<Response> {
    state
        .run(move |p| {
            p.logout(&caller.token);
            Ok(())
        })
        .await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

pub async fn consents(State(state): State<AppState>, Extension(caller): Extension<Caller>) -> ApiResult<Response> {
    let catalog = state.platform.config().consent.clone();
    let (outdated, records) = state
        .run(move |p| Ok((p.outdated_consents(caller.user), p.consent_records(caller.user))))
        .await?;
    Ok(ok(serde_json::json!({
        "documents": ConsentKind::REQUIRED.map(|k| catalog.get(k).clone()),
        "outdated": outdated,
        "records": records,
    })))
}

#[derive(Debug, Deserialize)]
pub struct AcceptConsentsBody {
    pub kinds: Vec<ConsentKind>,
}

pub async fn accept_consents(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    Body(body): Body<AcceptConsentsBody>,
) -> ApiResult<Response> {
    let records = state
        .run(move |p| p.accept_consents(caller.user, &body.kinds))
        .await?;
    Ok(ok(records))
}

#[derive(Debug, Deserialize)]
pub struct ResetBody {
    pub email: String,
}

pub async fn password_reset(State(state): State<AppState>, Body(body): Body<ResetBody>) -> ApiResult<Response> {
    state.run(move |p| p.request_password_reset(&body.email)).await?;
    Ok(StatusCode::ACCEPTED.into_response())
}

#[derive(Debug, Deserialize)]
pub struct ResetConfirmBody {
    pub token: String,
    pub password: String,
}

pub async fn password_reset_confirm(
    State(state): State<AppState>,
    Body(body): Body<ResetConfirmBody>,
) -> ApiResult<Response> {
    state
        .run(move |p| p.reset_password(&body.token, &body.password))
        .await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

fn self_view(p: &pds_core::Platform, user: UserId) -> pds_core::Result<SelfView> {
    let account = p.account(user)?;
    Ok(SelfView {
        profile: ProfileView::from(&account),
        email: account.email.clone(),
        is_admin: account.is_admin,
        devices: p
            .totp_devices(user)
            .into_iter()
            .map(|d| DeviceView {
                id: d.id,
                label: d.label,
                confirmed: d.confirmed,
                created_at: d.created_at,
            })
            .collect(),
        outdated_consents: p.outdated_consents(user),
    })
}

pub async fn me(State(state): State<AppState>, Extension(caller): Extension<Caller>) -> ApiResult<Response> {
    Ok(ok(state.run(move |p| self_view(p, caller.user)).await?))
}

#[derive(Debug, Deserialize)]
pub struct ProfileBody {
    pub display_name: Option<String>,
    pub bio: Option<String>,
    pub profile_photo: Option<MediaBody>,
    pub banner_photo: Option<MediaBody>,
}

pub async fn update_me(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    Body(body): Body<ProfileBody>,
) -> ApiResult<Response> {
    let view = state
        .run(move |p| {
            let update = ProfileUpdate {
                display_name: body.display_name,
                bio: body.bio,
                profile_photo: body.profile_photo.map(MediaBody::decode).transpose()?,
                banner_photo: body.banner_photo.map(MediaBody::decode).transpose()?,
            };
            p.update_profile(caller.user, update)?;
            self_view(p, caller.user)
        })
        .await?;
    Ok(ok(view))
}

pub async fn profile(State(state): State<AppState>, PathArgs(id): PathArgs<UserId>) -> ApiResult<Response> {
    let account = state.run(move |p| p.account(id)).await?;
    Ok(ok(ProfileView::from(&account)))
}

pub async fn media(State(state): State<AppState>, PathArgs(id): PathArgs<MediaId>) -> ApiResult<Response> {
    let media = state.run(move |p| p.media(id)).await?;
    Ok(([(CONTENT_TYPE, media.content_type)], media.bytes).into_response())
}

#[derive(Debug, Deserialize)]
pub struct RequestFilter {
    pub state: Option<RequestState>,
}

pub async fn researcher_requests(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    QueryArgs(q): QueryArgs<RequestFilter>,
) -> ApiResult<Response> {
    let list = state
        .run(move |p| p.researcher_requests(caller.user, q.state))
        .await?;
    Ok(ok(list))
}

#[derive(Debug, Deserialize)]
pub struct DecisionBody {
    pub approve: bool,
}

pub async fn decide_researcher_request(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    PathArgs(id): PathArgs<RequestId>,
    Body(body): Body<DecisionBody>,
) -> ApiResult<Response> {
    let request = state
        .run(move |p| p.decide_researcher_request(caller.user, id, body.approve))
        .await?;
    Ok(ok(request))
}
