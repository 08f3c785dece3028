use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::routing::get;
use axum::{Json, Router};
use heapscope_core::query::QueryCache;
use heapscope_core::store::DatasetManifest;
use serde::Deserialize;
use tower_http::services::ServeDir;

use crate::api::{self, MatrixResponse, ObjectResponse, QueryResponse};
use crate::error::ApiError;
use crate::registry::Registry;

#[derive(Clone)]
pub struct AppState {
    pub registry: Arc<Registry>,
    pub cache: Arc<QueryCache>,
    pub object_limit: usize,
}

#[derive(Debug, Deserialize)]
pub struct VisParams {
    vis: Option<String>,
}

/// API routes, plus static files from `ui_dir` for everything else.
pub fn router(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/datasets", get(datasets))
        .route("/json/{dataset}/query/{query}", get(query))
        .route("/json/{dataset}/matrix/{*composite}", get(matrix))
        .route("/json/{dataset}/objects/{id}", get(object))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(not_found),
    }
}

async fn not_found() -> ApiError {
    ApiError::new(
        axum::http::StatusCode::NOT_FOUND,
        "not_found",
        "no such endpoint",
    )
}

async fn datasets(State(state): State<AppState>) -> Json<Vec<DatasetManifest>> {
    Json(state.registry.manifests())
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("evaluation task failed: {e}")))?
}

async fn query(
    State(state): State<AppState>,
    Path((dataset, text)): Path<(String, String)>,
    Query(params): Query<VisParams>,
) -> Result<Json<QueryResponse>, ApiError> {
    let ds = state.registry.get(&dataset)?;
    blocking(move || {
        api::query(
            &ds,
            &text,
            params.vis.as_deref(),
            &state.cache,
            state.object_limit,
        )
    })
    .await
    .map(Json)
}

async fn matrix(
    State(state): State<AppState>,
    Path((dataset, composite)): Path<(String, String)>,
) -> Result<Json<MatrixResponse>, ApiError> {
    let ds = state.registry.get(&dataset)?;
    blocking(move || api::matrix(&ds, &composite, &state.cache))
        .await
        .map(Json)
}

async fn object(
    State(state): State<AppState>,
    Path((dataset, id)): Path<(String, String)>,
) -> Result<Json<ObjectResponse>, ApiError> {
    let ds = state.registry.get(&dataset)?;
    api::object(&ds, &id).map(Json)
}
