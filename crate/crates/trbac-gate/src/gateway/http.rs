//! HTTP surface: a thin JSON translation onto [`Gate`] methods.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{ConnectInfo, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{ApiError, Gate};

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status =
            StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|err| ApiError::malformed(err.to_string()))
}

fn bearer_token(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
}

fn respond<T: Serialize>(outcome: Result<T, ApiError>) -> Response {
    match outcome {
        Ok(payload) => (StatusCode::OK, Json(payload)).into_response(),
        Err(err) => err.into_response(),
    }
}

async fn register(State(gate): State<Arc<Gate>>, body: Bytes) -> Response {
    let req = match parse_body(&body) {
        Ok(req) => req,
        Err(err) => return err.into_response(),
    };
    // Hashing work happens off the async runtime.
    let outcome =
        tokio::task::spawn_blocking(move || gate.register(req)).await;
    match outcome {
        Ok(outcome) => respond(outcome),
        Err(_) => ApiError::internal("worker failed").into_response(),
    }
}

async fn password(State(gate): State<Arc<Gate>>, body: Bytes) -> Response {
    let req = match parse_body(&body) {
        Ok(req) => req,
        Err(err) => return err.into_response(),
    };
    let outcome = tokio::task::spawn_blocking(move || gate.password(req)).await;
    match outcome {
        Ok(outcome) => respond(outcome),
        Err(_) => ApiError::internal("worker failed").into_response(),
    }
}

async fn login(
    State(gate): State<Arc<Gate>>,
    peer: Option<ConnectInfo<SocketAddr>>,
    body: Bytes,
) -> Response {
    let req = match parse_body(&body) {
        Ok(req) => req,
        Err(err) => return err.into_response(),
    };
    let peer_ip = peer.map(|ConnectInfo(addr)| addr.ip());
    let outcome = tokio::task::spawn_blocking(move || gate.login(req, peer_ip)).await;
    match outcome {
        Ok(outcome) => respond(outcome),
        Err(_) => ApiError::internal("worker failed").into_response(),
    }
}

async fn activate(State(gate): State<Arc<Gate>>, headers: HeaderMap, body: Bytes) -> Response {
    match parse_body(&body) {
        Ok(req) => respond(gate.activate(bearer_token(&headers), req)),
        Err(err) => err.into_response(),
    }
}

async fn access(State(gate): State<Arc<Gate>>, headers: HeaderMap, body: Bytes) -> Response {
    match parse_body(&body) {
        Ok(req) => respond(gate.access(bearer_token(&headers), req)),
        Err(err) => err.into_response(),
    }
}

async fn complete(State(gate): State<Arc<Gate>>, headers: HeaderMap, body: Bytes) -> Response {
    match parse_body(&body) {
        Ok(req) => respond(gate.complete(bearer_token(&headers), req)),
        Err(err) => err.into_response(),
    }
}

async fn delegate(State(gate): State<Arc<Gate>>, headers: HeaderMap, body: Bytes) -> Response {
    match parse_body(&body) {
        Ok(req) => respond(gate.delegate(bearer_token(&headers), req)),
        Err(err) => err.into_response(),
    }
}

async fn alerts(State(gate): State<Arc<Gate>>, headers: HeaderMap) -> Response {
    respond(gate.alerts(bearer_token(&headers)))
}

/// The full endpoint surface over a shared gate.
pub fn router(gate: Arc<Gate>) -> Router {
    Router::new()
        .route("/v1/register", post(register))
        .route("/v1/password", post(password))
        .route("/v1/login", post(login))
        .route("/v1/tasks/activate", post(activate))
        .route("/v1/access", post(access))
        .route("/v1/tasks/complete", post(complete))
        .route("/v1/tasks/delegate", post(delegate))
        .route("/v1/alerts", get(alerts))
        .with_state(gate)
}

/// Serve until ctrl-c, then persist credentials and instance state.
pub async fn serve(gate: Arc<Gate>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(&gate.config().listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "gateway listening");
    let app = router(gate.clone());
    axum::serve(
        listener,
        app.into_make_service_with_connect_info::<SocketAddr>(),
    )
    .with_graceful_shutdown(async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    gate.flush_alerts();
    if let Err(err) = gate.persist() {
        tracing::error!(error = %err, "state persistence on shutdown failed");
    }
    Ok(())
}

/// Synchronous entry point for the CLI: builds a runtime and serves.
pub fn run_blocking(gate: Arc<Gate>) -> std::io::Result<()> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(serve(gate))
}
