//! HTTP API for the map explorer.
//!
//! Maps and the lexicon are loaded once into immutable shared state; every
//! handler is a pure function of that state and the request.

mod query;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lsm_core::ingest::read_map_archive;
use lsm_core::projection::{project_mask, Axis, ProjectionImage};
use lsm_core::report::{archive_paths, truth_mask};
use lsm_core::{Error, LabelId, MapBundle, QueryLexicon};
use serde::{Deserialize, Serialize};
use tower_http::cors::{Any, CorsLayer};

pub use query::{execute_query, QueryRequest, QueryResponse};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub file: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapInfo {
    pub map_id: String,
    pub cell_size: f32,
    pub dim: usize,
    pub voxel_count: usize,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapList {
    pub maps: Vec<MapInfo>,
    pub diagnostics: Vec<Diagnostic>,
}

pub struct AppState {
    pub maps: BTreeMap<String, MapBundle>,
    pub diagnostics: Vec<Diagnostic>,
    pub lexicon: QueryLexicon,
    pub prompt_templates: Vec<String>,
    pub encoder_url: Option<String>,
    client: reqwest::Client,
}

impl AppState {
    pub fn new(maps: Vec<MapBundle>, lexicon: QueryLexicon) -> Self {
        Self {
            maps: maps.into_iter().map(|m| (m.map_id.clone(), m)).collect(),
            diagnostics: Vec::new(),
            lexicon,
            prompt_templates: Vec::new(),
            encoder_url: None,
            client: reqwest::Client::new(),
        }
    }

    /// Loads every archive in `dir`. Unreadable archives become diagnostics;
    /// only an unreadable directory is an error.
    pub fn load(dir: impl AsRef<Path>, lexicon: QueryLexicon) -> lsm_core::Result<Self> {
        let mut state = Self::new(Vec::new(), lexicon);
        for path in archive_paths(dir)? {
            match read_map_archive(&path) {
                Ok(m) => {
                    state.maps.insert(m.map_id.clone(), m);
                }
                Err(e) => state.diagnostics.push(Diagnostic {
                    file: file_name(&path),
                    error: e.to_string(),
                }),
            }
        }
        Ok(state)
    }

    pub fn with_prompt_templates(mut self, templates: Vec<String>) -> Self {
        self.prompt_templates = templates;
        self
    }

    pub fn with_encoder_url(mut self, url: Option<String>) -> Self {
        self.encoder_url = url;
        self
    }

    pub fn map_list(&self) -> MapList {
        MapList {
            maps: self
                .maps
                .values()
                .map(|m| MapInfo {
                    map_id: m.map_id.clone(),
                    cell_size: m.embeddings.cell_size(),
                    dim: m.embeddings.dim(),
                    voxel_count: m.voxel_count(),
                    labels: m.vocabulary().map(|v| v.labels().to_vec()).unwrap_or_default(),
                })
                .collect(),
            diagnostics: self.diagnostics.clone(),
        }
    }

    fn map(&self, id: &str) -> Result<&MapBundle, ApiError> {
        self.maps
            .get(id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown map {id:?}")))
    }
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::DimMismatch { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            Error::UnresolvedKey(_) | Error::Invalid(_) | Error::ZeroNorm { .. } | Error::Empty(_) => {
                StatusCode::BAD_REQUEST
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    Router::new()
        .route("/api/maps", get(list_maps))
        .route("/api/maps/{id}/query", post(query_map))
        .route("/api/maps/{id}/groundtruth", get(ground_truth))
        .route("/api/encode", post(encode))
        .layer(cors)
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

async fn list_maps(State(state): State<Arc<AppState>>) -> Json<MapList> {
    Json(state.map_list())
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request: {e}")))
}

async fn query_map(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<QueryResponse>, ApiError> {
    state.map(&id)?;
    let request: QueryRequest = parse_body(&body)?;
    // Scoring and morphology are CPU bound; keep them off the async workers.
    tokio::task::spawn_blocking(move || {
        let map = state.map(&id)?;
        execute_query(map, &state.lexicon, &state.prompt_templates, &request)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map(Json)
}

#[derive(Debug, Deserialize)]
struct GroundTruthParams {
    label: Option<String>,
    axis: Option<String>,
}

/// Occupancy projection of the voxels carrying `label`.
pub fn ground_truth_projection(map: &MapBundle, label: LabelId, axis: Axis) -> Result<ProjectionImage, ApiError> {
    let vocab = map
        .vocabulary()
        .ok_or_else(|| ApiError::bad_request(format!("map {} has no semantics", map.map_id)))?;
    if usize::from(label) >= vocab.len() {
        return Err(ApiError::bad_request(format!(
            "label {label} outside vocabulary of {} labels",
            vocab.len()
        )));
    }
    Ok(project_mask(&truth_mask(map, label)?, axis))
}

async fn ground_truth(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(params): Query<GroundTruthParams>,
) -> Result<Json<ProjectionImage>, ApiError> {
    let map = state.map(&id)?;
    let raw = params.label.ok_or_else(|| ApiError::bad_request("missing label parameter"))?;
    let label: LabelId = raw
        .parse()
        .ok()
        .or_else(|| map.vocabulary().and_then(|v| v.id_of(&raw)))
        .ok_or_else(|| ApiError::bad_request(format!("bad label {raw:?}")))?;
    let axis = match params.axis {
        Some(a) => a.parse::<Axis>()?,
        None => Axis::default(),
    };
    ground_truth_projection(map, label, axis).map(Json)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeResponse {
    pub embedding: Vec<f32>,
}

async fn encode(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<EncodeResponse>, ApiError> {
    let Some(url) = &state.encoder_url else {
        return Err(ApiError::new(StatusCode::NOT_IMPLEMENTED, "no encoder configured"));
    };
    let request: EncodeRequest = parse_body(&body)?;
    let upstream = |e: String| ApiError::new(StatusCode::BAD_GATEWAY, format!("encoder: {e}"));
    let response = state
        .client
        .post(url)
        .json(&request)
        .send()
        .await
        .map_err(|e| upstream(e.to_string()))?;
    if !response.status().is_success() {
        return Err(upstream(format!("status {}", response.status())));
    }
    let encoded: EncodeResponse = response.json().await.map_err(|e| upstream(e.to_string()))?;
    if encoded.embedding.len() != state.lexicon.dim {
        return Err(Error::DimMismatch {
            expected: state.lexicon.dim,
            found: encoded.embedding.len(),
        }
        .into());
    }
    Ok(Json(encoded))
}
