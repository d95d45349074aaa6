//! HTTP routes. Every write runs as one workflow command inside one
//! transaction; reads never return another user's draft.

use std::collections::HashSet;
use std::convert::Infallible;

use axum::body::{Body, Bytes};
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, FromRequestParts, Path, Query, State};
use axum::http::header::{AUTHORIZATION, CACHE_CONTROL, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use futures_util::{future, StreamExt};
use sensorlab_core::analytics::{compute_report, scope_to_class, weekly_activity, WeekActivity};
use sensorlab_core::event::payload::InquiryText;
use sensorlab_core::{
    Capture, ClassGroup, ClassId, Comment, DiscoverQuery, EngagementReport, FeedCursor, Inquiry, InquiryId,
    InquiryScore, LineageKind, PhotoRef, Repository, Role, ScoreCategory, UserAccount, UserId,
};
use sensorlab_protocol::{Measurement, SensorType};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio_stream::wrappers::BroadcastStream;

use crate::auth;
use crate::error::ApiError;
use crate::gateway::DeviceEntry;
use crate::state::{AppState, Inner};
use crate::store::{self, PhotoMeta, SqlRepository};

pub const PAGE_SIZE: usize = 20;
pub const MAX_PAGE_SIZE: usize = 100;
pub const MAX_PHOTO_BYTES: usize = 5 * 1024 * 1024;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/auth/register", post(register))
        .route("/auth/login", post(login))
        .route("/me", get(me))
        .route("/me/inquiries", get(my_inquiries))
        .route("/classes", post(create_class))
        .route("/classes/{key}", get(class_info))
        .route("/classes/{key}/join", post(join_class))
        .route("/classes/{key}/code", post(regenerate_code))
        .route("/classes/{key}/report", get(class_report))
        .route("/classes/{key}/activity", get(class_activity))
        .route("/report", get(overall_report))
        .route("/inquiries", get(discover).post(create_inquiry))
        .route("/inquiries/{id}", get(inquiry_detail).patch(edit_inquiry))
        .route("/inquiries/{id}/datapoints", post(capture))
        .route("/inquiries/{id}/publish", post(publish))
        .route("/inquiries/{id}/comments", get(list_comments).post(comment))
        .route("/inquiries/{id}/replicate", post(replicate))
        .route("/inquiries/{id}/remix", post(remix))
        .route("/inquiries/{id}/lineage", get(lineage))
        .route("/inquiries/{id}/score-override", post(score_override))
        .route("/exemplars", post(seed_exemplar))
        // One byte over the cap so oversize uploads reach the handler and get
        // a structured 413.
        .route("/photos", post(upload_photo).layer(DefaultBodyLimit::max(MAX_PHOTO_BYTES + 1)))
        .route("/photos/{id}", get(get_photo))
        .route("/devices", get(list_devices))
        .route("/devices/{id}/stream", get(device_stream))
        .with_state(state)
}

// ---- extractors and helpers ---------------------------------------------

/// The signed-in caller.
pub struct CurrentUser(pub UserAccount);

impl FromRequestParts<AppState> for CurrentUser {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(auth::bearer)
            .ok_or_else(ApiError::unauthorized)?
            .to_string();
        let user = state
            .read(move |_, store| {
                let Some(id) = store::session_user(store.conn(), &token, Utc::now())? else { return Ok(None) };
                Ok(store.repo().user(id)?)
            })
            .await?;
        user.map(CurrentUser).ok_or_else(ApiError::unauthorized)
    }
}

fn json<T>(body: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    match body {
        Ok(Json(v)) => Ok(v),
        Err(JsonRejection::JsonDataError(e)) => {
            Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", e.body_text()))
        }
        Err(e) => Err(ApiError::new(e.status(), "bad_request", e.body_text())),
    }
}

/// A body that may be empty.
fn optional_json<T: DeserializeOwned + Default>(bytes: &Bytes) -> Result<T, ApiError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(bytes).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", e.to_string()))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(v)| v).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", e.body_text()))
}

fn created<T: Serialize>(value: T) -> Response {
    (StatusCode::CREATED, Json(value)).into_response()
}

fn require_teacher(user: &UserAccount) -> Result<(), ApiError> {
    match user.role {
        Role::Teacher => Ok(()),
        Role::Student => Err(ApiError::forbidden("teachers only")),
    }
}

fn class_id(key: &str) -> Result<ClassId, ApiError> {
    key.parse().map(ClassId).map_err(|_| ApiError::not_found(format!("class {key}")))
}

fn owned_class(repo: &SqlRepository<'_>, user: &UserAccount, key: &str) -> Result<ClassGroup, ApiError> {
    let class = repo.class(class_id(key)?)?.ok_or_else(|| ApiError::not_found(format!("class {key}")))?;
    if class.teacher_id != user.id {
        return Err(ApiError::forbidden("only the class teacher can do this"));
    }
    Ok(class)
}

/// An inquiry with its current score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InquiryView {
    #[serde(flatten)]
    pub inquiry: Inquiry,
    pub score: InquiryScore,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comments: Option<Vec<Comment>>,
}

fn view(inner: &Inner, inquiry: Inquiry) -> InquiryView {
    InquiryView { score: inner.engine.score(&inquiry), inquiry, comments: None }
}

// ---- accounts -------------------------------------------------------------

#[derive(Debug, Deserialize)]
pub struct RegisterRequest {
    pub username: String,
    pub password: String,
    #[serde(default)]
    pub role: Option<Role>,
    /// Students usually register straight into a class.
    #[serde(default)]
    pub class_code: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct LoginRequest {
    pub username: String,
    pub password: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionResponse {
    pub token: String,
    pub expires_at: DateTime<Utc>,
    pub user: UserAccount,
}

fn open_session(inner: &Inner, repo: &mut SqlRepository<'_>, user: UserId) -> Result<SessionResponse, ApiError> {
    let now = Utc::now();
    inner.workflow.start_session(repo, user, now)?;
    let token = auth::new_token();
    let expires_at = now + inner.session_ttl;
    store::insert_session(repo.conn(), &token, user, expires_at)?;
    let user = repo.user(user)?.ok_or_else(|| ApiError::internal("session user vanished"))?;
    Ok(SessionResponse { token, expires_at, user })
}

async fn hash(password: String) -> Result<String, ApiError> {
    tokio::task::spawn_blocking(move || auth::hash_password(&password))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(ApiError::internal)
}

async fn register(State(state): State<AppState>, body: Result<Json<RegisterRequest>, JsonRejection>) -> Result<Response, ApiError> {
    let req = json(body)?;
    let len = req.password.chars().count();
    if !(auth::MIN_PASSWORD_LEN..=auth::MAX_PASSWORD_LEN).contains(&len) {
        return Err(ApiError::invalid(
            "password",
            format!("password must be {} to {} characters", auth::MIN_PASSWORD_LEN, auth::MAX_PASSWORD_LEN),
        ));
    }
    let phc = hash(req.password).await?;
    let session = state
        .write(move |inner, repo| {
            let now = Utc::now();
            let user = inner.workflow.register(repo, &req.username, req.role.unwrap_or(Role::Student), now)?;
            store::set_credentials(repo.conn(), user.id, &phc)?;
            if let Some(code) = req.class_code.as_deref().filter(|c| !c.trim().is_empty()) {
                inner.workflow.join_class(repo, user.id, code, now)?;
            }
            open_session(inner, repo, user.id)
        })
        .await?;
    Ok(created(session))
}

async fn login(State(state): State<AppState>, body: Result<Json<LoginRequest>, JsonRejection>) -> Result<Json<SessionResponse>, ApiError> {
    let req = json(body)?;
    let username = req.username.trim().to_string();
    let found = state
        .read(move |_, store| {
            let Some(user) = store.repo().user_by_name(&username)? else { return Ok(None) };
            Ok(store::credentials(store.conn(), user.id)?.map(|phc| (user.id, phc)))
        })
        .await?;
    let Some((user, phc)) = found else { return Err(ApiError::unauthorized()) };
    let password = req.password;
    let ok = tokio::task::spawn_blocking(move || auth::verify_password(&password, &phc))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?;
    if !ok {
        return Err(ApiError::unauthorized());
    }
    Ok(Json(state.write(move |inner, repo| open_session(inner, repo, user)).await?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClassView {
    pub id: ClassId,
    pub name: String,
    pub teacher_id: UserId,
    /// Shown to the class teacher only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub join_code: Option<String>,
    pub members: usize,
    pub created_at: DateTime<Utc>,
}

fn class_view(repo: &SqlRepository<'_>, viewer: &UserAccount, class: ClassGroup) -> Result<ClassView, ApiError> {
    let members = store::class_members(repo.conn(), class.id)?.len();
    Ok(ClassView {
        id: class.id,
        join_code: (class.teacher_id == viewer.id).then(|| class.join_code.to_string()),
        name: class.name,
        teacher_id: class.teacher_id,
        members,
        created_at: class.created_at,
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MeResponse {
    pub user: UserAccount,
    pub classes: Vec<ClassView>,
}

async fn me(State(state): State<AppState>, CurrentUser(user): CurrentUser) -> Result<Json<MeResponse>, ApiError> {
    state
        .read(move |_, store| {
            let repo = store.repo();
            let mut classes = Vec::new();
            for id in &user.class_ids {
                if let Some(class) = repo.class(*id)? {
                    classes.push(class_view(&repo, &user, class)?);
                }
            }
            Ok(Json(MeResponse { user, classes }))
        })
        .await
}

async fn my_inquiries(State(state): State<AppState>, CurrentUser(user): CurrentUser) -> Result<Json<Vec<InquiryView>>, ApiError> {
    state
        .read(move |inner, store| {
            Ok(Json(store.repo().authored_by(user.id)?.into_iter().map(|i| view(inner, i)).collect()))
        })
        .await
}

// ---- classes --------------------------------------------------------------

#[derive(Debug, Deserialize)]
pub struct NewClass {
    pub name: String,
}

async fn create_class(
    State(state): State<AppState>,
    CurrentUser(user): CurrentUser,
    body: Result<Json<NewClass>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = json(body)?;
    require_teacher(&user)?;
    let view = state
        .write(move |inner, repo| {
            let mut rng = inner.codes.lock().unwrap_or_else(|p| p.into_inner());
            let class = inner.workflow.create_class(repo, user.id, &req.name, &mut *rng, Utc::now())?;
            let user = repo.user(user.id)?.unwrap_or(user);
            class_view(repo, &user, class)
        })
        .await?;
    Ok(created(view))
}

async fn class_info(
    State(state): State<AppState>,
    CurrentUser(user): CurrentUser,
    Path(key): Path<String>,
) -> Result<Json<ClassView>, ApiError> {
    state
        .read(move |_, store| {
            let repo = store.repo();
            let id = class_id(&key)?;
            let class = repo.class(id)?.ok_or_else(|| ApiError::not_found(format!("class {key}")))?;
            if !user.class_ids.contains(&id) {
                return Err(ApiError::forbidden("not a member of this class"));
            }
            Ok(Json(class_view(&repo, &user, class)?))
        })
        .await
}

async fn join_class(
    State(state): State<AppState>,
    CurrentUser(user): CurrentUser,
    Path(code): Path<String>,
) -> Result<Json<ClassView>, ApiError> {
    state
        .write(move |inner, repo| {
            let m = inner.workflow.join_class(repo, user.id, &code, Utc::now())?;
            let class = repo.class(m.class_id)?.ok_or_else(|| ApiError::internal("joined class vanished"))?;
            class_view(repo, &user, class).map(Json)
        })
        .await
}

async fn regenerate_code(
    State(state): State<AppState>,
    CurrentUser(user): CurrentUser,
    Path(key): Path<String>,
) -> Result<Json<ClassView>, ApiError> {
    state
        .write(move |inner, repo| {
            let id = class_id(&key)?;
            let mut rng = inner.codes.lock().unwrap_or_else(|p| p.into_inner());
            let class = inner.workflow.regenerate_code(repo, user.id, id, &mut *rng, Utc::now())?;
            class_view(repo, &user, class).map(Json)
        })
        .await
}

fn class_scope(
    repo: &SqlRepository<'_>,
    user: &UserAccount,
    key: &str,
) -> Result<(Vec<sensorlab_core::EventRecord>, Vec<Inquiry>), ApiError> {
    let class = owned_class(repo, user, key)?;
    let mut members: HashSet<UserId> = store::class_members(repo.conn(), class.id)?.into_iter().collect();
    members.insert(class.teacher_id);
    Ok(scope_to_class(&repo.events()?, &repo.inquiries()?, class.id, &members))
}

async fn class_report(
    State(state): State<AppState>,
    CurrentUser(user): CurrentUser,
    Path(key): Path<String>,
) -> Result<Json<EngagementReport>, ApiError> {
    state
        .read(move |inner, store| {
            let (events, inquiries) = class_scope(&store.repo(), &user, &key)?;
            Ok(Json(compute_report(&events, &inquiries, &inner.engine)?))
        })
        .await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ActivityResponse {
    pub class_id: ClassId,
    pub weeks: Vec<WeekActivity>,
}

async fn class_activity(
    State(state): State<AppState>,
    CurrentUser(user): CurrentUser,
    Path(key): Path<String>,
) -> Result<Json<ActivityResponse>, ApiError> {
    state
        .read(move |_, store| {
            let (events, _) = class_scope(&store.repo(), &user, &key)?;
            let weeks = weekly_activity(&events).map_err(|e| ApiError::internal(e.to_string()))?;
            Ok(Json(ActivityResponse { class_id: class_id(&key)?, weeks }))
        })
        .await
}

async fn overall_report(State(state): State<AppState>, CurrentUser(user): CurrentUser) -> Result<Json<EngagementReport>, ApiError> {
    require_teacher(&user)?;
    state
        .read(move |inner, store| {
            let repo = store.repo();
            Ok(Json(compute_report(&repo.events()?, &repo.inquiries()?, &inner.engine)?))
        })
        .await
}

// ---- inquiries ------------------------------------------------------------

#[derive(Debug, Deserialize)]
pub struct NewInquiry {
    pub sensor_type: SensorType,
    #[serde(default)]
    pub class_id: Option<ClassId>,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub notes: String,
}

async fn create_inquiry(
    State(state): State<AppState>,
    CurrentUser(user): CurrentUser,
    body: Result<Json<NewInquiry>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = json(body)?;
    let v = state
        .write(move |inner, repo| {
            let text = InquiryText { title: req.title, description: req.description, notes: req.notes };
            let i = inner.workflow.create_inquiry(repo, user.id, req.class_id, req.sensor_type, text, Utc::now())?;
            Ok(view(inner, i))
        })
        .await?;
    Ok(created(v))
}

/// Partial update: absent fields keep their value.
#[derive(Debug, Default, Deserialize)]
pub struct InquiryPatch {
    pub title: Option<String>,
    pub description: Option<String>,
    pub notes: Option<String>,
}

async fn edit_inquiry(
    State(state): State<AppState>,
    CurrentUser(user): CurrentUser,
    Path(id): Path<u64>,
    body: Result<Json<InquiryPatch>, JsonRejection>,
) -> Result<Json<InquiryView>, ApiError> {
    let patch = json(body)?;
    state
        .write(move |inner, repo| {
            // Merge over the author's own text only; anyone else gets the
            // workflow's refusal without a peek at the draft.
            let (title, description, notes) = repo
                .inquiry(InquiryId(id))?
                .filter(|i| i.author_id == user.id)
                .map(|i| (i.title, i.description, i.notes))
                .unwrap_or_default();
            let text = InquiryText {
                title: patch.title.unwrap_or(title),
                description: patch.description.unwrap_or(description),
                notes: patch.notes.unwrap_or(notes),
            };
            let i = inner.workflow.edit_inquiry(repo, user.id, InquiryId(id), text, Utc::now())?;
            Ok(Json(view(inner, i)))
        })
        .await
}

#[derive(Debug, Deserialize)]
pub struct NewDataPoint {
    pub measurement: Measurement,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub photo_ref: Option<String>,
}

fn photo_ref(repo: &SqlRepository<'_>, text: Option<String>) -> Result<Option<PhotoRef>, ApiError> {
    let Some(text) = text else { return Ok(None) };
    let known = PhotoRef::parse(&text).filter(|p| matches!(store::photo(repo.conn(), p.as_str()), Ok(Some(_))));
    known.map(Some).ok_or_else(|| ApiError::invalid("photo_ref", format!("no uploaded photo `{text}`")))
}

async fn capture(
    State(state): State<AppState>,
    CurrentUser(user): CurrentUser,
    Path(id): Path<u64>,
    body: Result<Json<NewDataPoint>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = json(body)?;
    let v = state
        .write(move |inner, repo| {
            let photo_ref = photo_ref(repo, req.photo_ref)?;
            let capture = Capture { measurement: req.measurement, label: req.label, photo_ref };
            let i = inner.workflow.capture(repo, user.id, InquiryId(id), capture, Utc::now())?;
            Ok(view(inner, i))
        })
        .await?;
    Ok(created(v))
}

async fn publish(
    State(state): State<AppState>,
    CurrentUser(user): CurrentUser,
    Path(id): Path<u64>,
) -> Result<Json<InquiryView>, ApiError> {
    state
        .write(move |inner, repo| Ok(Json(view(inner, inner.workflow.publish(repo, user.id, InquiryId(id), Utc::now())?))))
        .await
}

async fn inquiry_detail(
    State(state): State<AppState>,
    CurrentUser(user): CurrentUser,
    Path(id): Path<u64>,
) -> Result<Json<InquiryView>, ApiError> {
    state
        .read(move |inner, store| {
            let repo = store.repo();
            let inquiry = inner.workflow.view_inquiry(&repo, user.id, InquiryId(id))?;
            let comments = repo.comments(inquiry.id)?;
            Ok(Json(InquiryView { comments: Some(comments), ..view(inner, inquiry) }))
        })
        .await
}

#[derive(Debug, Deserialize)]
pub struct NewComment {
    pub body: String,
}

async fn comment(
    State(state): State<AppState>,
    CurrentUser(user): CurrentUser,
    Path(id): Path<u64>,
    body: Result<Json<NewComment>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = json(body)?;
    let c = state
        .write(move |inner, repo| Ok(inner.workflow.comment(repo, user.id, InquiryId(id), &req.body, Utc::now())?))
        .await?;
    Ok(created(c))
}

async fn list_comments(
    State(state): State<AppState>,
    CurrentUser(user): CurrentUser,
    Path(id): Path<u64>,
) -> Result<Json<Vec<Comment>>, ApiError> {
    state
        .read(move |inner, store| {
            let repo = store.repo();
            let inquiry = inner.workflow.view_inquiry(&repo, user.id, InquiryId(id))?;
            Ok(Json(repo.comments(inquiry.id)?))
        })
        .await
}

#[derive(Debug, Default, Deserialize)]
pub struct DeriveRequest {
    #[serde(default)]
    pub class_id: Option<ClassId>,
}

async fn derive(state: AppState, user: UserAccount, id: u64, kind: LineageKind, body: Bytes) -> Result<Response, ApiError> {
    let req: DeriveRequest = optional_json(&body)?;
    let v = state
        .write(move |inner, repo| {
            let i = inner.workflow.derive(repo, user.id, InquiryId(id), kind, req.class_id, Utc::now())?;
            Ok(view(inner, i))
        })
        .await?;
    Ok(created(v))
}

async fn replicate(
    State(state): State<AppState>,
    CurrentUser(user): CurrentUser,
    Path(id): Path<u64>,
    body: Bytes,
) -> Result<Response, ApiError> {
    derive(state, user, id, LineageKind::Replication, body).await
}

async fn remix(
    State(state): State<AppState>,
    CurrentUser(user): CurrentUser,
    Path(id): Path<u64>,
    body: Bytes,
) -> Result<Response, ApiError> {
    derive(state, user, id, LineageKind::Remix, body).await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LineageResponse {
    /// From the inquiry itself back to its root.
    pub chain: Vec<InquiryId>,
}

async fn lineage(
    State(state): State<AppState>,
    CurrentUser(user): CurrentUser,
    Path(id): Path<u64>,
) -> Result<Json<LineageResponse>, ApiError> {
    state
        .read(move |inner, store| {
            let repo = store.repo();
            inner.workflow.view_inquiry(&repo, user.id, InquiryId(id))?;
            Ok(Json(LineageResponse { chain: inner.workflow.ancestry(&repo, InquiryId(id))? }))
        })
        .await
}

#[derive(Debug, Deserialize)]
pub struct OverrideRequest {
    pub category: ScoreCategory,
    pub reason: String,
}

async fn score_override(
    State(state): State<AppState>,
    CurrentUser(user): CurrentUser,
    Path(id): Path<u64>,
    body: Result<Json<OverrideRequest>, JsonRejection>,
) -> Result<Json<InquiryView>, ApiError> {
    let req = json(body)?;
    state
        .write(move |inner, repo| {
            let i = inner.workflow.override_score(repo, user.id, InquiryId(id), req.category, &req.reason, Utc::now())?;
            Ok(Json(view(inner, i)))
        })
        .await
}

#[derive(Debug, Deserialize)]
pub struct NewExemplar {
    pub class_id: ClassId,
    pub sensor_type: SensorType,
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub notes: String,
    pub captures: Vec<NewDataPoint>,
}

async fn seed_exemplar(
    State(state): State<AppState>,
    CurrentUser(user): CurrentUser,
    body: Result<Json<NewExemplar>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = json(body)?;
    let v = state
        .write(move |inner, repo| {
            let mut captures = Vec::with_capacity(req.captures.len());
            for c in req.captures {
                let photo_ref = photo_ref(repo, c.photo_ref)?;
                captures.push(Capture { measurement: c.measurement, label: c.label, photo_ref });
            }
            let text = InquiryText { title: req.title, description: req.description, notes: req.notes };
            let i = inner.workflow.seed_exemplar(repo, user.id, req.class_id, req.sensor_type, text, captures, Utc::now())?;
            Ok(view(inner, i))
        })
        .await?;
    Ok(created(v))
}

// ---- discover -------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
pub struct DiscoverParams {
    pub sensor: Option<String>,
    pub status: Option<String>,
    pub class: Option<u64>,
    #[serde(default)]
    pub exemplars: bool,
    pub cursor: Option<String>,
    pub limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DiscoverPage {
    pub items: Vec<InquiryView>,
    /// Pass back as `cursor` for the next page; absent on the last one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_cursor: Option<String>,
    /// Matches across all pages.
    pub total: usize,
}

fn discover_query(p: DiscoverParams) -> Result<DiscoverQuery, ApiError> {
    if p.status.as_deref().is_some_and(|s| s != "published") {
        return Err(ApiError::invalid("status", "discover lists published inquiries only; see /me/inquiries for drafts"));
    }
    let sensor = match p.sensor.as_deref().filter(|s| !s.is_empty()) {
        None => None,
        Some(s) => Some(s.parse::<SensorType>().map_err(|e| ApiError::invalid("sensor", e))?),
    };
    let after = match p.cursor.as_deref().filter(|c| !c.is_empty()) {
        None => None,
        Some(c) => Some(FeedCursor::decode(c).ok_or_else(|| ApiError::invalid("cursor", "malformed cursor"))?),
    };
    let limit = p.limit.unwrap_or(PAGE_SIZE);
    if !(1..=MAX_PAGE_SIZE).contains(&limit) {
        return Err(ApiError::invalid("limit", format!("limit must be 1 to {MAX_PAGE_SIZE}")));
    }
    Ok(DiscoverQuery { sensor, class_id: p.class.map(ClassId), exemplars: p.exemplars, after, limit: Some(limit) })
}

async fn discover(
    State(state): State<AppState>,
    CurrentUser(_): CurrentUser,
    params: Result<Query<DiscoverParams>, QueryRejection>,
) -> Result<Json<DiscoverPage>, ApiError> {
    let q = discover_query(query(params)?)?;
    state
        .read(move |inner, store| {
            let repo = store.repo();
            let limit = q.limit.unwrap_or(PAGE_SIZE);
            // One extra row tells whether another page exists.
            let mut hits = inner.workflow.discover(&repo, &DiscoverQuery { limit: Some(limit + 1), ..q.clone() })?;
            let more = hits.len() > limit;
            hits.truncate(limit);
            let next_cursor = if more { hits.last().and_then(FeedCursor::of).map(|c| c.encode()) } else { None };
            let total = repo.discover_count(&q)?;
            Ok(Json(DiscoverPage { items: hits.into_iter().map(|i| view(inner, i)).collect(), next_cursor, total }))
        })
        .await
}

// ---- photos ---------------------------------------------------------------

async fn upload_photo(
    State(state): State<AppState>,
    CurrentUser(user): CurrentUser,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let media_type = headers
        .get(CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .map(|v| v.split(';').next().unwrap_or("").trim().to_ascii_lowercase())
        .unwrap_or_default();
    if !media_type.starts_with("image/") {
        return Err(ApiError::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, "media_type", "upload an image/* body"));
    }
    if body.is_empty() {
        return Err(ApiError::invalid("body", "empty photo"));
    }
    if body.len() > MAX_PHOTO_BYTES {
        return Err(ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "too_large", "photos are limited to 5 MiB"));
    }
    let id = hex::encode(Sha256::digest(&body));
    let meta = PhotoMeta { id: id.clone(), media_type, size: body.len() as u64 };
    let path = state.inner.photo_dir.join(&id);
    tokio::task::spawn_blocking(move || -> std::io::Result<()> {
        if path.exists() {
            return Ok(());
        }
        // Write then rename so a reader never sees half a file.
        let tmp = path.with_extension(format!("part-{}", auth::new_token()));
        std::fs::write(&tmp, &body)?;
        std::fs::rename(&tmp, &path)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
    .map_err(|e| ApiError::internal(format!("storing photo: {e}")))?;
    let stored = meta.clone();
    state
        .write(move |_, repo| {
            store::insert_photo(repo.conn(), &stored, user.id, Utc::now())?;
            Ok(())
        })
        .await?;
    Ok(created(meta))
}

async fn get_photo(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let missing = || ApiError::not_found(format!("photo {id}"));
    let Some(handle) = PhotoRef::parse(&id) else { return Err(missing()) };
    let key = handle.as_str().to_string();
    let meta = state.read(move |_, store| Ok(store::photo(store.conn(), &key)?)).await?.ok_or_else(missing)?;
    let path = state.inner.photo_dir.join(&meta.id);
    let bytes = tokio::task::spawn_blocking(move || std::fs::read(path))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(|e| ApiError::internal(format!("reading photo: {e}")))?;
    Ok((
        [(CONTENT_TYPE, meta.media_type), (CACHE_CONTROL, "public, max-age=31536000, immutable".to_string())],
        bytes,
    )
        .into_response())
}

// ---- devices --------------------------------------------------------------

async fn list_devices(State(state): State<AppState>, CurrentUser(_): CurrentUser) -> Json<Vec<DeviceEntry>> {
    Json(state.gateway().devices().cloned().collect())
}

/// Newline-delimited JSON, one record per measurement, ending with an error
/// record if the device fails.
async fn device_stream(
    State(state): State<AppState>,
    CurrentUser(_): CurrentUser,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let rx = state.gateway().subscribe(&id).ok_or_else(|| ApiError::not_found(format!("device {id}")))?;
    let lines = BroadcastStream::new(rx)
        // A lagging subscriber skips what it missed.
        .filter_map(|r| future::ready(r.ok()))
        .scan(false, |done, record| {
            if *done {
                return future::ready(None);
            }
            *done = record.is_error();
            let mut line = serde_json::to_vec(&record).unwrap_or_default();
            line.push(b'\n');
            future::ready(Some(Ok::<_, Infallible>(line)))
        });
    Ok(([(CONTENT_TYPE, "application/x-ndjson")], Body::from_stream(lines)).into_response())
}
