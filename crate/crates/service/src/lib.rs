//! HTTP front end for rollout sessions.
//!
//! Inference runs on the blocking pool; each session is behind its own lock
//! so act calls on one session are serialized while sessions proceed
//! independently.

pub mod wire;

use std::net::SocketAddr;
use std::sync::Arc;

use acgn_core::session::SessionStore;
use acgn_core::CoreError;
use acgn_sim::EnvKind;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};

use wire::*;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<SessionStore>,
}

/// Error body `{code, message}` with a matching status.
#[derive(Debug)]
pub struct HttpError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl HttpError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request",
            message: message.into(),
        }
    }
}

impl From<CoreError> for HttpError {
    fn from(e: CoreError) -> Self {
        let (status, code) = match &e {
            CoreError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            CoreError::UnknownNode { .. } => (StatusCode::NOT_FOUND, "unknown_node"),
            CoreError::NodeLimit(_) => (StatusCode::CONFLICT, "node_limit"),
            CoreError::Capacity(_) => (StatusCode::SERVICE_UNAVAILABLE, "capacity"),
            CoreError::InvalidAction(_) | CoreError::Slots { .. } => {
                (StatusCode::UNPROCESSABLE_ENTITY, "invalid_action")
            }
            CoreError::MalformedFrame(_) => (StatusCode::BAD_REQUEST, "malformed_frame"),
            CoreError::Sim(_) => (StatusCode::UNPROCESSABLE_ENTITY, "simulator"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self {
            status,
            code,
            message: e.to_string(),
        }
    }
}

impl From<JsonRejection> for HttpError {
    fn from(r: JsonRejection) -> Self {
        Self::bad_request(r.body_text())
    }
}

impl IntoResponse for HttpError {
    fn into_response(self) -> Response {
        let body = ApiError {
            code: self.code.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, HttpError>;

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, HttpError> + Send + 'static,
) -> Result<T, HttpError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| HttpError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            message: e.to_string(),
        })?
}

async fn health(State(s): State<AppState>) -> Json<Health> {
    let m = s.store.model();
    Json(Health {
        status: "ok".into(),
        model: m.kind().to_string(),
        env: m.vocab.env.to_string(),
        checkpoint: s.store.digest().to_string(),
    })
}

async fn create_session(
    State(s): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<SessionCreated> {
    let Json(req) = body?;
    let env: EnvKind = req
        .env
        .parse()
        .map_err(|e: String| HttpError::bad_request(e))?;
    let frame = match &req.frame_b64 {
        Some(b) => {
            Some(frame_from_b64(b).map_err(|m| HttpError::from(CoreError::MalformedFrame(m)))?)
        }
        None => None,
    };
    blocking(move || {
        let handle = s.store.create(env, req.seed, frame)?;
        let session = handle.lock().expect("session lock");
        let root = session.node(0)?;
        Ok(Json(SessionCreated {
            session_id: session.id.clone(),
            root_node: 0,
            frame_b64: frame_b64(root.last_frame()),
            valid_actions: wire_actions(&session.valid_actions(s.store.simulator(), 0)?),
        }))
    })
    .await
}

async fn act(
    State(s): State<AppState>,
    Path((sid, nid)): Path<(String, u32)>,
    body: Result<Json<ActRequest>, JsonRejection>,
) -> ApiResult<ActResponse> {
    let Json(req) = body?;
    let cmds = req
        .actions
        .iter()
        .map(|a| a.to_command())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|m| HttpError::from(CoreError::InvalidAction(m)))?;
    blocking(move || {
        let handle = s.store.get(&sid)?;
        let mut session = handle.lock().expect("session lock");
        let child = s.store.act(&mut session, nid, &cmds)?;
        let node = session.node(child)?;
        Ok(Json(ActResponse {
            node_id: child,
            frames_b64: node.frames.iter().map(frame_b64).collect(),
            valid_actions: wire_actions(&session.valid_actions(s.store.simulator(), child)?),
        }))
    })
    .await
}

async fn tree(State(s): State<AppState>, Path(sid): Path<String>) -> ApiResult<Tree> {
    let handle = s.store.get(&sid)?;
    let session = handle.lock().expect("session lock");
    Ok(Json(session.tree()))
}

async fn node(
    State(s): State<AppState>,
    Path((sid, nid)): Path<(String, u32)>,
) -> ApiResult<NodeView> {
    blocking(move || {
        let handle = s.store.get(&sid)?;
        let session = handle.lock().expect("session lock");
        let n = session.node(nid)?;
        Ok(Json(NodeView {
            node_id: n.id,
            parent: n.parent,
            actions: wire_actions(&n.actions),
            frames_b64: n.frames.iter().map(frame_b64).collect(),
            valid_actions: wire_actions(&session.valid_actions(s.store.simulator(), nid)?),
        }))
    })
    .await
}

async fn frame(
    State(s): State<AppState>,
    Path((sid, nid, k)): Path<(String, u32, usize)>,
) -> Result<Response, HttpError> {
    let handle = s.store.get(&sid)?;
    let session = handle.lock().expect("session lock");
    let n = session.node(nid)?;
    let f = n.frames.get(k).ok_or_else(|| HttpError {
        status: StatusCode::NOT_FOUND,
        code: "unknown_frame",
        message: format!("node {nid} has {} frames", n.frames.len()),
    })?;
    let png = f
        .to_png_bytes()
        .map_err(|e| HttpError::from(CoreError::Sim(e)))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn not_found() -> HttpError {
    HttpError {
        status: StatusCode::NOT_FOUND,
        code: "not_found",
        message: "no such route".into(),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{sid}/tree", get(tree))
        .route("/v1/sessions/{sid}/nodes/{nid}", get(node))
        .route("/v1/sessions/{sid}/nodes/{nid}/act", post(act))
        .route("/v1/sessions/{sid}/nodes/{nid}/frames/{k}", get(frame))
        .fallback(not_found)
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(store: Arc<SessionStore>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(AppState { store }))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
