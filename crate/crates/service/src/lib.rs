//! HTTP front end over a [`Registry`].
//!
//! Every endpoint speaks JSON except `POST /sensors/bulk`, whose body is the
//! raw catalog, and `POST /search?format=csv`. Until the first catalog is
//! published, endpoints that need a snapshot answer 503.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use sensor_search::ranking::{compute_weights, PriorityProfile};
use sensor_search::registry::{RegistryError, SensorDocument};
use sensor_search::{search, CatalogFormat, PropertySchema, Registry, RegistrySnapshot, SearchError, SearchRequest};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

/// Largest catalog accepted by `POST /sensors/bulk`.
pub const BULK_BODY_LIMIT: usize = 1 << 30;

#[derive(Debug, Clone)]
pub struct AppState {
    pub registry: Arc<Registry>,
    /// Schema applied to uploaded catalogs.
    pub schema: PropertySchema,
}

impl AppState {
    pub fn new(schema: PropertySchema) -> Self {
        Self {
            registry: Arc::new(Registry::new()),
            schema,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RouterOptions {
    /// Static files served for any path no endpoint claims.
    pub ui_dir: Option<PathBuf>,
    pub cors: bool,
}

pub fn router(state: AppState, options: &RouterOptions) -> Router {
    let mut app = Router::new()
        .route("/health", get(health))
        .route("/schema", get(schema))
        .route("/sensors/{id}", get(sensor))
        .route("/sensors/bulk", post(bulk_load).layer(DefaultBodyLimit::max(BULK_BODY_LIMIT)))
        .route("/search", post(search_handler))
        .route("/debug/weights", post(debug_weights))
        .with_state(state);
    if let Some(dir) = &options.ui_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    if options.cors {
        app = app.layer(CorsLayer::permissive());
    }
    app
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl ToString) -> Self {
        Self {
            status,
            kind,
            message: message.to_string(),
        }
    }

    fn no_snapshot() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "no_snapshot", "no catalog has been loaded")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.kind, "message": self.message }))).into_response()
    }
}

impl From<SearchError> for ApiError {
    fn from(e: SearchError) -> Self {
        let kind = match e {
            SearchError::Query(_) => "invalid_query",
            SearchError::Ranking(_) => "invalid_profile",
            SearchError::Cphf(_) | SearchError::InvalidRequest(_) => "invalid_request",
        };
        Self::new(StatusCode::BAD_REQUEST, kind, e)
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_catalog", e)
    }
}

fn current(state: &AppState) -> Result<Arc<RegistrySnapshot>, ApiError> {
    state.registry.snapshot().ok_or_else(ApiError::no_snapshot)
}

async fn health(State(state): State<AppState>) -> Response {
    match state.registry.snapshot() {
        None => (StatusCode::SERVICE_UNAVAILABLE, Json(json!({ "status": "no_snapshot" }))).into_response(),
        Some(s) => Json(json!({
            "status": "ok",
            "version": s.version(),
            "sensors": s.len(),
            "properties": s.schema().len(),
        }))
        .into_response(),
    }
}

async fn schema(State(state): State<AppState>) -> Result<Json<PropertySchema>, ApiError> {
    Ok(Json(current(&state)?.schema().clone()))
}

async fn sensor(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SensorDocument>, ApiError> {
    let snapshot = current(&state)?;
    match snapshot.get(&id) {
        Some(s) => Ok(Json(s.to_document(snapshot.schema()))),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no sensor with id {id:?}"))),
    }
}

#[derive(Debug, Deserialize)]
struct BulkParams {
    #[serde(default)]
    format: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LoadSummary {
    pub version: u64,
    pub sensors: usize,
    pub format: String,
}

async fn bulk_load(
    State(state): State<AppState>,
    Query(params): Query<BulkParams>,
    body: Bytes,
) -> Result<Json<LoadSummary>, ApiError> {
    let format: CatalogFormat = params
        .format
        .as_deref()
        .unwrap_or("csv")
        .parse()
        .map_err(|e: String| ApiError::new(StatusCode::BAD_REQUEST, "invalid_format", e))?;
    let registry = Arc::clone(&state.registry);
    let schema = state.schema.clone();
    let snapshot = tokio::task::spawn_blocking(move || registry.load(body.as_ref(), format, schema))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e))??;
    tracing::info!(version = snapshot.version(), sensors = snapshot.len(), "catalog published");
    Ok(Json(LoadSummary {
        version: snapshot.version(),
        sensors: snapshot.len(),
        format: format.to_string(),
    }))
}

#[derive(Debug, Deserialize)]
struct SearchParams {
    #[serde(default)]
    format: Option<String>,
}

async fn search_handler(
    State(state): State<AppState>,
    Query(params): Query<SearchParams>,
    Json(request): Json<SearchRequest>,
) -> Result<Response, ApiError> {
    let csv = match params.format.as_deref() {
        None | Some("json") => false,
        Some("csv") => true,
        Some(other) => {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid_format", format!("unknown format {other:?}")))
        }
    };
    let snapshot = current(&state)?;
    let response = tokio::task::spawn_blocking(move || search(&snapshot, &request))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e))??;
    if !csv {
        return Ok(Json(response).into_response());
    }
    let mut body = Vec::new();
    response
        .write_csv(&mut body)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e))?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body).into_response())
}

/// What the service makes of a profile: the profile as parsed, and the
/// weights the ranking would use.
#[derive(Debug, Serialize, Deserialize)]
pub struct WeightsEcho {
    pub profile: PriorityProfile,
    pub weights: BTreeMap<String, f64>,
}

async fn debug_weights(Json(profile): Json<PriorityProfile>) -> Result<Json<WeightsEcho>, ApiError> {
    let weights = compute_weights(&profile).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_profile", e))?;
    Ok(Json(WeightsEcho {
        weights: weights.iter().map(|(k, w)| (k.to_string(), w)).collect(),
        profile,
    }))
}

/// Resolves when the process receives Ctrl-C (or SIGTERM on Unix).
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = terminate => {},
    }
    tracing::info!("shutting down");
}
