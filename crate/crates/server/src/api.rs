//! HTTP routes. Every team route requires the `X-Team-Key` header; the
//! provisioning route requires `X-Admin-Key` and is disabled when the server
//! has no admin key configured.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use botboard_core::model::TeamId;
use botboard_core::wire::{
    CreateJournalEntry, CreatePost, ErrorBody, JournalEntryView, JournalList, PostList, ProvisionTeam, SearchResponse,
    ADMIN_KEY_HEADER, TEAM_KEY_HEADER,
};
use serde::de::DeserializeOwned;

use crate::store::{Store, StoreError, DEFAULT_POST_LIMIT, DEFAULT_RECENT_LIMIT, DEFAULT_SEARCH_LIMIT};

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub admin_key: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn validation(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "validation_error", message)
    }
}

impl From<StoreError> for ApiError {
    fn from(err: StoreError) -> Self {
        let message = err.to_string();
        match err {
            StoreError::Unauthorized => Self::new(StatusCode::UNAUTHORIZED, "unauthorized", message),
            StoreError::Validation(_) | StoreError::InvalidLimit => Self::validation(message),
            StoreError::EmptyQuery => Self::new(StatusCode::BAD_REQUEST, "empty_query", message),
            StoreError::NotFound => Self::new(StatusCode::NOT_FOUND, "not_found", message),
            StoreError::TeamExists(_) | StoreError::KeyInUse => Self::new(StatusCode::CONFLICT, "conflict", message),
            StoreError::ProviderMismatch { .. } | StoreError::Corrupt(_) | StoreError::Database(_) => {
                tracing::error!(error = %message, "store failure");
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/api/v1/posts", post(create_post).get(list_posts))
        .route("/api/v1/journal", post(create_journal))
        .route("/api/v1/journal/search", get(search_journal))
        .route("/api/v1/journal/recent", get(list_recent))
        .route("/api/v1/journal/{id}", get(read_entry))
        .route("/api/v1/export", get(export))
        .route("/api/v1/admin/teams", post(provision_team))
        .with_state(state)
}

fn team_of(state: &AppState, headers: &HeaderMap) -> ApiResult<TeamId> {
    let key = headers
        .get(TEAM_KEY_HEADER)
        .and_then(|v| v.to_str().ok())
        .ok_or_else(|| ApiError::from(StoreError::Unauthorized))?;
    Ok(state.store.authenticate(key)?)
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::validation(format!("invalid JSON body: {e}")))
}

fn limit_param(params: &HashMap<String, String>, default: usize) -> ApiResult<usize> {
    match params.get("limit") {
        None => Ok(default),
        Some(raw) => match raw.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(ApiError::validation(format!(
                "limit must be a positive integer, got {raw:?}"
            ))),
        },
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, StoreError> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

async fn create_post(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> ApiResult<impl IntoResponse> {
    let team = team_of(&state, &headers)?;
    let req: CreatePost = parse_body(&body)?;
    let store = Arc::clone(&state.store);
    let post = blocking(move || store.create_post(&team, &req.author, &req.body, &req.tags)).await?;
    Ok((StatusCode::CREATED, Json(post)))
}

async fn list_posts(
    State(state): State<AppState>,
    headers: HeaderMap,
    Query(params): Query<HashMap<String, String>>,
) -> ApiResult<Json<PostList>> {
    let team = team_of(&state, &headers)?;
    let limit = limit_param(&params, DEFAULT_POST_LIMIT)?;
    let posts = state
        .store
        .list_posts(&team, params.get("tag").map(String::as_str), limit)?;
    Ok(Json(PostList { posts }))
}

async fn create_journal(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let team = team_of(&state, &headers)?;
    let req: CreateJournalEntry = parse_body(&body)?;
    let store = Arc::clone(&state.store);
    let entry = blocking(move || store.create_journal_entry(&team, &req.sections)).await?;
    Ok((StatusCode::CREATED, Json(JournalEntryView::from(&entry))))
}

async fn search_journal(
    State(state): State<AppState>,
    headers: HeaderMap,
    Query(params): Query<HashMap<String, String>>,
) -> ApiResult<Json<SearchResponse>> {
    let team = team_of(&state, &headers)?;
    let limit = limit_param(&params, DEFAULT_SEARCH_LIMIT)?;
    let query = params.get("q").map(String::as_str).unwrap_or_default();
    let hits = state.store.search_journal(&team, query, limit)?;
    Ok(Json(SearchResponse::rendered(hits)))
}

async fn read_entry(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Json<JournalEntryView>> {
    let team = team_of(&state, &headers)?;
    let entry = state.store.read_entry(&team, &id)?;
    Ok(Json(JournalEntryView::from(&entry)))
}

async fn list_recent(
    State(state): State<AppState>,
    headers: HeaderMap,
    Query(params): Query<HashMap<String, String>>,
) -> ApiResult<Json<JournalList>> {
    let team = team_of(&state, &headers)?;
    let limit = limit_param(&params, DEFAULT_RECENT_LIMIT)?;
    let entries = state.store.list_recent(&team, limit)?;
    Ok(Json(JournalList {
        entries: entries.iter().map(JournalEntryView::from).collect(),
    }))
}

async fn export(State(state): State<AppState>, headers: HeaderMap) -> ApiResult<impl IntoResponse> {
    let team = team_of(&state, &headers)?;
    Ok(Json(state.store.export(&team)?))
}

async fn provision_team(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let presented = headers.get(ADMIN_KEY_HEADER).and_then(|v| v.to_str().ok());
    match (&state.admin_key, presented) {
        (Some(expected), Some(given)) if expected == given => {}
        _ => return Err(StoreError::Unauthorized.into()),
    }
    let req: ProvisionTeam = if body.is_empty() {
        ProvisionTeam::default()
    } else {
        parse_body(&body)?
    };
    let requested = req
        .team_id
        .map(TeamId::new)
        .transpose()
        .map_err(|e| ApiError::validation(e.to_string()))?;
    let store = Arc::clone(&state.store);
    let creds = blocking(move || store.provision_team(requested)).await?;
    Ok((StatusCode::CREATED, Json(creds)))
}
