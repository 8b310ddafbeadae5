use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::{get, post, put};
use axum::Router;
use coops_core::catalog::{CatalogDiff, SyncOutcome};
use coops_core::directory::Community;
use coops_core::domain::{AppView, CatalogEntry, CommunityId, Decision, IdentityTriple, MemberId, MemberRef, Visibility};
use coops_core::events::NotificationEvent;
use coops_core::oversight::{CommunityAppRow, PermissionTallyRow, TallyFilter, TallyScope};
use coops_core::social::{DirectMessage, FeedItem, FeedPost, LikeOutcome, MessageId, PostId, Reply, DEFAULT_PAGE, MAX_PAGE};
use coops_core::Registration;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::ApiError;
use crate::extract::{Auth, Json, Path, Query};
use crate::AppState;

type ApiResult<T> = Result<Json<T>, ApiError>;
type Created<T> = Result<(StatusCode, Json<T>), ApiError>;

pub fn api() -> Router<AppState> {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/auth/register", post(register))
        .route("/v1/communities", post(create_community))
        .route("/v1/communities/join", post(join_community))
        .route("/v1/communities/{id}/members", get(list_members))
        .route("/v1/catalog", put(upload_snapshot).patch(apply_diff))
        .route("/v1/catalog/{package}/visibility", put(set_visibility))
        .route("/v1/catalog/{package}/permissions/{name}", put(set_permission))
        .route("/v1/communities/{id}/apps", get(community_apps))
        .route("/v1/communities/{id}/members/{member}/apps", get(member_apps))
        .route("/v1/communities/{id}/apps/{package}/permissions", get(permission_tally))
        .route("/v1/communities/{id}/feed", post(create_post).get(feed))
        .route("/v1/feed/{post}/likes", post(toggle_like))
        .route("/v1/feed/{post}/replies", post(reply))
        .route("/v1/messages/{member}", post(send_message).get(conversation))
        .route("/v1/notifications", get(poll))
        .route("/v1/notifications/ack", post(ack))
        .route("/v1/telemetry", post(record_usage))
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Deserialize)]
struct RegisterRequest {
    device_id: String,
    sim_serial: String,
    platform_id: String,
    display_name: String,
}

async fn register(State(state): State<AppState>, Json(req): Json<RegisterRequest>) -> ApiResult<Registration> {
    let triple = IdentityTriple::new(req.device_id, req.sim_serial, req.platform_id);
    Ok(Json(state.coops.register(&triple, &req.display_name)?))
}

#[derive(Deserialize)]
struct CreateCommunity {
    name: String,
}

async fn create_community(
    State(state): State<AppState>,
    Auth(caller): Auth,
    Json(req): Json<CreateCommunity>,
) -> Created<Community> {
    let community = state.coops.create_community(&caller, &req.name)?;
    Ok((StatusCode::CREATED, Json(community)))
}

#[derive(Deserialize)]
struct JoinCommunity {
    invite_code: String,
}

async fn join_community(
    State(state): State<AppState>,
    Auth(caller): Auth,
    Json(req): Json<JoinCommunity>,
) -> ApiResult<MemberRef> {
    Ok(Json(state.coops.join_community(&caller, &req.invite_code)?))
}

async fn list_members(
    State(state): State<AppState>,
    Auth(caller): Auth,
    Path(id): Path<CommunityId>,
) -> ApiResult<Vec<MemberRef>> {
    Ok(Json(state.coops.list_members(&caller, &id)?))
}

async fn upload_snapshot(
    State(state): State<AppState>,
    Auth(caller): Auth,
    Json(entries): Json<Vec<CatalogEntry>>,
) -> ApiResult<SyncOutcome> {
    Ok(Json(state.coops.upload_snapshot(&caller, &entries)?))
}

#[derive(Deserialize)]
struct DiffRequest {
    #[serde(flatten)]
    diff: CatalogDiff,
    base_version: Option<u64>,
}

async fn apply_diff(
    State(state): State<AppState>,
    Auth(caller): Auth,
    Json(req): Json<DiffRequest>,
) -> ApiResult<SyncOutcome> {
    Ok(Json(state.coops.apply_diff(&caller, &req.diff, req.base_version)?))
}

#[derive(Serialize)]
struct VersionReply {
    version: u64,
}

#[derive(Deserialize)]
struct VisibilityRequest {
    visibility: Visibility,
}

async fn set_visibility(
    State(state): State<AppState>,
    Auth(caller): Auth,
    Path(package): Path<String>,
    Json(req): Json<VisibilityRequest>,
) -> ApiResult<VersionReply> {
    let version = state.coops.set_visibility(&caller, &package, req.visibility)?;
    Ok(Json(VersionReply { version }))
}

#[derive(Deserialize)]
struct PermissionRequest {
    decision: Decision,
}

async fn set_permission(
    State(state): State<AppState>,
    Auth(caller): Auth,
    Path((package, name)): Path<(String, String)>,
    Json(req): Json<PermissionRequest>,
) -> ApiResult<VersionReply> {
    let version = state.coops.set_permission(&caller, &package, &name, req.decision)?;
    Ok(Json(VersionReply { version }))
}

async fn community_apps(
    State(state): State<AppState>,
    Auth(caller): Auth,
    Path(id): Path<CommunityId>,
) -> ApiResult<Vec<CommunityAppRow>> {
    Ok(Json(state.coops.community_apps(&caller, &id)?))
}

async fn member_apps(
    State(state): State<AppState>,
    Auth(caller): Auth,
    Path((id, member)): Path<(CommunityId, MemberId)>,
) -> ApiResult<Vec<AppView>> {
    Ok(Json(state.coops.member_apps(&caller, &id, &member)?))
}

#[derive(Deserialize, Default, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum ScopeParam {
    #[default]
    Community,
    Member,
}

#[derive(Deserialize)]
struct TallyQuery {
    #[serde(default)]
    scope: ScopeParam,
    member: Option<MemberId>,
    #[serde(default)]
    filter: TallyFilter,
}

async fn permission_tally(
    State(state): State<AppState>,
    Auth(caller): Auth,
    Path((id, package)): Path<(CommunityId, String)>,
    Query(q): Query<TallyQuery>,
) -> ApiResult<Vec<PermissionTallyRow>> {
    let scope = match (q.scope, q.member) {
        (ScopeParam::Community, None) => TallyScope::Community,
        (ScopeParam::Member, Some(member)) => TallyScope::Member(member),
        (ScopeParam::Community, Some(_)) => {
            return Err(ApiError::invalid_request("`member` requires scope=member"))
        }
        (ScopeParam::Member, None) => {
            return Err(ApiError::invalid_request("scope=member requires `member`"))
        }
    };
    Ok(Json(state.coops.permission_tally(&caller, &id, &package, &scope, q.filter)?))
}

#[derive(Deserialize)]
struct BodyRequest {
    body: String,
}

async fn create_post(
    State(state): State<AppState>,
    Auth(caller): Auth,
    Path(id): Path<CommunityId>,
    Json(req): Json<BodyRequest>,
) -> Created<FeedPost> {
    let post = state.coops.create_post(&caller, &id, &req.body)?;
    Ok((StatusCode::CREATED, Json(post)))
}

async fn feed(
    State(state): State<AppState>,
    Auth(caller): Auth,
    Path(id): Path<CommunityId>,
) -> ApiResult<Vec<FeedItem>> {
    Ok(Json(state.coops.feed(&caller, &id)?))
}

async fn toggle_like(
    State(state): State<AppState>,
    Auth(caller): Auth,
    Path(post): Path<PostId>,
) -> ApiResult<LikeOutcome> {
    Ok(Json(state.coops.toggle_like(&caller, post)?))
}

async fn reply(
    State(state): State<AppState>,
    Auth(caller): Auth,
    Path(post): Path<PostId>,
    Json(req): Json<BodyRequest>,
) -> Created<Reply> {
    let reply = state.coops.reply(&caller, post, &req.body)?;
    Ok((StatusCode::CREATED, Json(reply)))
}

async fn send_message(
    State(state): State<AppState>,
    Auth(caller): Auth,
    Path(member): Path<MemberId>,
    Json(req): Json<BodyRequest>,
) -> Created<DirectMessage> {
    let message = state.coops.send_message(&caller, &member, &req.body)?;
    Ok((StatusCode::CREATED, Json(message)))
}

#[derive(Deserialize)]
struct PageQuery {
    after: Option<MessageId>,
    limit: Option<usize>,
}

async fn conversation(
    State(state): State<AppState>,
    Auth(caller): Auth,
    Path(member): Path<MemberId>,
    Query(q): Query<PageQuery>,
) -> ApiResult<Vec<DirectMessage>> {
    let limit = q.limit.unwrap_or(DEFAULT_PAGE).clamp(1, MAX_PAGE);
    Ok(Json(state.coops.conversation(&caller, &member, q.after, limit)?))
}

#[derive(Deserialize)]
struct PollQuery {
    #[serde(default)]
    after: u64,
    #[serde(default)]
    wait_ms: u64,
}

async fn poll(
    State(state): State<AppState>,
    Auth(caller): Auth,
    Query(q): Query<PollQuery>,
) -> Json<Vec<NotificationEvent>> {
    let wait = Duration::from_millis(q.wait_ms).min(state.max_poll_wait);
    Json(state.coops.poll(&caller, q.after, wait).await)
}

#[derive(Deserialize)]
struct AckRequest {
    up_to: u64,
}

#[derive(Serialize)]
struct AckReply {
    acked: usize,
}

async fn ack(
    State(state): State<AppState>,
    Auth(caller): Auth,
    Json(req): Json<AckRequest>,
) -> ApiResult<AckReply> {
    let acked = state.coops.ack(&caller, req.up_to)?;
    Ok(Json(AckReply { acked }))
}

#[derive(Deserialize)]
struct UsageRequest {
    action: String,
}

async fn record_usage(
    State(state): State<AppState>,
    Auth(caller): Auth,
    Json(req): Json<UsageRequest>,
) -> Created<Value> {
    state.coops.record_usage(&caller, &req.action)?;
    Ok((StatusCode::CREATED, Json(json!({ "status": "recorded" }))))
}
