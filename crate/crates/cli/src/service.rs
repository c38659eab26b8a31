//! JSON-over-HTTP service for spot-color refinement.
//!
//! Routes:
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | POST | `/api/spot/session` | `{target_lab: [L,a,b]` or `target_hex, n_h?, n_l?, step_h?, step_l?}` | 201 `{session_id, grid}` |
//! | GET | `/api/spot/session/{id}` | | 200 session state |
//! | POST | `/api/spot/session/{id}/select` | `{hue_offset, lightness_offset}` | 200 `{grid}` |
//! | POST | `/api/spot/session/{id}/confirm` | | 200 `{final: {lab, npac, srgb_hex}}` |
//! | GET | `/api/gamut/mesh` | | 200 gamut mesh |
//! | GET | `/api/health` | | 200 `{status, press_id}` |
//!
//! Errors are `{error}` with 400 for malformed requests, 404 for unknown
//! sessions or routes and 409 for changes to a confirmed session.

use std::fmt::Display;
use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use npcolor::colorimetry::{parse_hex, srgb8_to_lab};
use npcolor::gamut::{AlternativesGrid, GamutDefinition, GamutModel, GridParams};
use npcolor::press::synth_np_table;
use npcolor::{Lab, ViewingCondition};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::config::ServiceConfig;
use crate::files::{build_gamut, check_lab, load_press, now_rfc3339, read_json, write_json};
use crate::session::{FinalSelection, SessionEvent, SessionStore, SpotSession};

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Display) -> Self {
        ApiError {
            status,
            message: message.to_string(),
        }
    }

    pub fn bad_request(message: impl Display) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    pub fn not_found(message: impl Display) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    pub fn conflict(message: impl Display) -> Self {
        Self::new(StatusCode::CONFLICT, message)
    }

    pub fn internal(message: impl Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

/// Immutable models plus the session store, shared by all handlers.
pub struct AppState {
    pub press_id: String,
    pub gamut: GamutModel,
    mesh: Bytes,
    pub sessions: SessionStore,
}

impl AppState {
    pub fn new(press_id: impl Into<String>, gamut: GamutModel, sessions: SessionStore) -> Result<Self> {
        let mesh = Bytes::from(serde_json::to_vec(&gamut.export_mesh())?);
        Ok(AppState {
            press_id: press_id.into(),
            gamut,
            mesh,
            sessions,
        })
    }

    /// Loads the press, then the gamut from its cache (writing the cache when
    /// it does not exist yet), then replays the session log.
    pub fn from_config(config: &ServiceConfig) -> Result<Self> {
        let vc = ViewingCondition::d50();
        let press = load_press(&config.press_path)?;
        let gamut = match &config.gamut_cache_path {
            Some(p) if p.exists() => {
                let def: GamutDefinition = read_json(p)?;
                if def.table != synth_np_table(&press)? {
                    anyhow::bail!("gamut cache {} does not match press {}", p.display(), press.id());
                }
                def.build(&vc)?
            }
            Some(p) => {
                let g = build_gamut(&press, Default::default(), &vc)?;
                write_json(&GamutDefinition::of(&g), Some(p))?;
                g
            }
            None => build_gamut(&press, Default::default(), &vc)?,
        };
        let sessions = SessionStore::open(&config.session_log_path, &gamut)?;
        AppState::new(press.id(), gamut, sessions)
    }
}

pub fn router(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/gamut/mesh", get(mesh))
        .route("/api/spot/session", post(create_session))
        .route("/api/spot/session/{id}", get(get_session))
        .route("/api/spot/session/{id}/select", post(select))
        .route("/api/spot/session/{id}/confirm", post(confirm))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(|| async { ApiError::not_found("no such route") }),
    }
}

pub async fn serve(config: ServiceConfig) -> Result<()> {
    let state = Arc::new(AppState::from_config(&config)?);
    let app = router(state, config.static_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(&config.listen_addr)
        .await
        .with_context(|| format!("binding {}", config.listen_addr))?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let bytes: &[u8] = if body.iter().all(u8::is_ascii_whitespace) { b"{}" } else { body };
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

#[derive(Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub press_id: String,
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        press_id: state.press_id.clone(),
    })
}

async fn mesh(State(state): State<Arc<AppState>>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], state.mesh.clone()).into_response()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    pub target_lab: Option<[f64; 3]>,
    pub target_hex: Option<String>,
    pub n_h: Option<u32>,
    pub n_l: Option<u32>,
    pub step_h: Option<f64>,
    pub step_l: Option<f64>,
}

impl CreateRequest {
    fn target(&self, vc: &ViewingCondition) -> Result<Lab, ApiError> {
        let lab = match (&self.target_lab, &self.target_hex) {
            (Some(v), None) => Lab::from_array(*v),
            (None, Some(h)) => srgb8_to_lab(parse_hex(h).map_err(ApiError::bad_request)?, vc),
            _ => return Err(ApiError::bad_request("give exactly one of target_lab and target_hex")),
        };
        check_lab(&lab).map_err(ApiError::bad_request)?;
        Ok(lab)
    }

    fn params(&self) -> GridParams {
        let d = GridParams::default();
        GridParams {
            n_h: self.n_h.unwrap_or(d.n_h),
            n_l: self.n_l.unwrap_or(d.n_l),
            step_h: self.step_h.unwrap_or(d.step_h),
            step_l: self.step_l.unwrap_or(d.step_l),
        }
    }
}

#[derive(Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub grid: AlternativesGrid,
}

#[derive(Serialize, Deserialize)]
pub struct GridResponse {
    pub grid: AlternativesGrid,
}

#[derive(Serialize, Deserialize)]
pub struct Confirmed {
    #[serde(rename = "final")]
    pub final_selection: FinalSelection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectRequest {
    pub hue_offset: f64,
    pub lightness_offset: f64,
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> Result<(StatusCode, Json<Created>), ApiError> {
    let req: CreateRequest = parse_body(&body)?;
    let target = req.target(state.gamut.viewing_condition())?;
    let params = req.params();
    let id = uuid::Uuid::new_v4().simple().to_string();
    let at = now_rfc3339();
    let session = SpotSession::create(&state.gamut, id.clone(), target, params, at.clone())?;
    state
        .sessions
        .append(&SessionEvent::Created {
            session_id: id.clone(),
            target,
            params,
            at,
        })
        .map_err(ApiError::internal)?;
    let grid = session.grid.clone();
    state.sessions.insert(session);
    Ok((StatusCode::CREATED, Json(Created { session_id: id, grid })))
}

async fn get_session(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<SpotSession>, ApiError> {
    let shared = state.sessions.get(&id).ok_or_else(|| ApiError::not_found(format!("unknown session {id}")))?;
    let session = shared.lock().await;
    Ok(Json(session.clone()))
}

async fn select(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<GridResponse>, ApiError> {
    let shared = state.sessions.get(&id).ok_or_else(|| ApiError::not_found(format!("unknown session {id}")))?;
    let mut session = shared.lock().await;
    if session.is_confirmed() {
        return Err(ApiError::conflict("session is already confirmed"));
    }
    let req: SelectRequest = parse_body(&body)?;
    if !(req.hue_offset.is_finite() && req.lightness_offset.is_finite()) {
        return Err(ApiError::bad_request("offsets must be finite"));
    }
    // Work on a copy so a failed log write leaves the session untouched.
    let mut next = session.clone();
    let at = now_rfc3339();
    next.select(&state.gamut, req.hue_offset, req.lightness_offset, at.clone())?;
    state
        .sessions
        .append(&SessionEvent::Selected {
            session_id: id,
            hue_offset: req.hue_offset,
            lightness_offset: req.lightness_offset,
            at,
        })
        .map_err(ApiError::internal)?;
    *session = next;
    Ok(Json(GridResponse {
        grid: session.grid.clone(),
    }))
}

async fn confirm(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<Confirmed>, ApiError> {
    let shared = state.sessions.get(&id).ok_or_else(|| ApiError::not_found(format!("unknown session {id}")))?;
    let mut session = shared.lock().await;
    let mut next = session.clone();
    let at = now_rfc3339();
    let final_selection = next.confirm(&state.gamut, at.clone())?.clone();
    state
        .sessions
        .append(&SessionEvent::Confirmed { session_id: id, at })
        .map_err(ApiError::internal)?;
    *session = next;
    Ok(Json(Confirmed { final_selection }))
}
