//! Local HTTP/JSON service over one [`Session`].
//!
//! | route | |
//! |---|---|
//! | `GET /api/session` | session metadata |
//! | `GET /api/mesh/{j}` | shape `j` (0 = rest) as `{vertices, faces}` |
//! | `POST /api/blend` | `{weights, energy?, blendFn?, method?, iters?, tol?, requestId?}` |
//! | `GET /healthz` | liveness |
//!
//! Vertex arrays are flat `[x0, y0, z0, x1, ...]` in original-vertex order.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tetriblend_core::{
    blend, BlendFunction, BlendRequest, Energy, EsOptions, TetrisationMethod, TriangleMesh, Vec3,
};

use crate::session::{Session, SessionInfo};

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BlendBody {
    pub weights: Vec<f64>,
    #[serde(default)]
    pub energy: Energy,
    #[serde(default)]
    pub blend_fn: BlendFunction,
    /// Must match the session's tetrisation when given.
    pub method: Option<TetrisationMethod>,
    pub iters: Option<usize>,
    pub tol: Option<f64>,
    pub request_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BlendStats {
    pub energy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    pub reflection_events: usize,
    /// Wall time of target blending plus solve.
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BlendResponse {
    pub vertices: Vec<f64>,
    pub report: BlendStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub request_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshResponse {
    pub vertices: Vec<f64>,
    pub faces: Vec<[usize; 3]>,
}

pub fn flatten(vertices: &[Vec3]) -> Vec<f64> {
    vertices.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

type Shared = Arc<Session>;

pub fn router(session: Shared) -> Router {
    Router::new()
        .route("/api/session", get(session_info))
        .route("/api/mesh/{j}", get(mesh))
        .route("/api/blend", post(blend_handler))
        .route("/healthz", get(|| async { "ok" }))
        .with_state(session)
}

async fn session_info(State(session): State<Shared>) -> Json<SessionInfo> {
    Json(session.info())
}

async fn mesh(State(session): State<Shared>, Path(j): Path<usize>) -> Result<Json<MeshResponse>, ApiError> {
    let shape: &TriangleMesh = session.shapes.get(j).ok_or_else(|| {
        ApiError(StatusCode::NOT_FOUND, format!("no shape {j}; valid range is 0..={}", session.shapes.len() - 1))
    })?;
    Ok(Json(MeshResponse { vertices: flatten(&shape.vertices), faces: shape.faces.clone() }))
}

/// Validates a request body against the session; `Err` carries the status.
pub fn parse_blend_body(session: &Session, body: &[u8]) -> Result<(BlendRequest, Option<u64>), ApiError> {
    let body: BlendBody =
        serde_json::from_slice(body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("malformed request: {e}")))?;
    let m = session.model.shape_count();
    if body.weights.len() != m {
        return Err(ApiError(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("expected {m} weights, got {}", body.weights.len()),
        ));
    }
    if let Some(method) = body.method {
        if method != session.model.method() {
            return Err(ApiError(
                StatusCode::UNPROCESSABLE_ENTITY,
                format!("session uses {} tetrisation, request asked for {method}", session.model.method()),
            ));
        }
    }
    let mut es_options = EsOptions::default();
    if let Some(iters) = body.iters {
        es_options.max_iterations = iters;
    }
    if let Some(tol) = body.tol {
        es_options.tol = tol;
    }
    let request = BlendRequest { weights: body.weights, energy: body.energy, blend_fn: body.blend_fn, es_options };
    Ok((request, body.request_id))
}

/// Runs a blend request synchronously.
pub fn run_blend(session: &Session, request: &BlendRequest, request_id: Option<u64>) -> Result<BlendResponse, ApiError> {
    let start = Instant::now();
    let (mesh, report) = blend(&session.model, request)
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let millis = start.elapsed().as_secs_f64() * 1e3;
    Ok(BlendResponse {
        vertices: flatten(&mesh.vertices),
        report: BlendStats {
            energy: report.final_energy,
            iterations: report.iterations,
            converged: report.converged,
            residual: report.residual,
            reflection_events: report.reflection_events,
            millis,
        },
        request_id,
    })
}

async fn blend_handler(State(session): State<Shared>, body: Bytes) -> Result<Json<BlendResponse>, ApiError> {
    let (request, request_id) = parse_blend_body(&session, &body)?;
    tokio::task::spawn_blocking(move || run_blend(&session, &request, request_id))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map(Json)
}

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve_listener(
    listener: tokio::net::TcpListener,
    session: Shared,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(session)).with_graceful_shutdown(shutdown).await
}

/// Binds `127.0.0.1:port` and serves until Ctrl-C.
pub fn serve(session: Session, port: u16, worker_threads: Option<usize>) -> std::io::Result<()> {
    let mut builder = tokio::runtime::Builder::new_multi_thread();
    builder.enable_all();
    if let Some(n) = worker_threads {
        builder.worker_threads(n.max(1)).max_blocking_threads(n.max(1));
    }
    builder.build()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], port))).await?;
        log::info!("listening on http://{}", listener.local_addr()?);
        eprintln!("serving on http://{}", listener.local_addr()?);
        serve_listener(listener, Arc::new(session), async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })
}
