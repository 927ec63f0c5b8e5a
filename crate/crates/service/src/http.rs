use std::collections::VecDeque;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use wardsense_core::nn::load_model;
use wardsense_core::pipelines::ActivityClassifier;

use crate::app::{now_ms, ApiError, App, DEFAULT_EVENT_LIMIT};
use crate::config::ServiceConfig;
use crate::store::Store;
use crate::types::{AccelPacket, NewPatient};
use crate::ServiceError;

#[derive(Clone)]
struct Shared {
    app: Arc<App>,
    heartbeat: Duration,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("malformed body: {e}")))
}

async fn register(State(s): State<Shared>, body: Bytes) -> Result<(StatusCode, Json<crate::types::PatientRecord>), ApiError> {
    let req: NewPatient = parse_body(&body)?;
    Ok((StatusCode::CREATED, Json(s.app.register(req)?)))
}

async fn get_patient(State(s): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(s.app.get_patient(&id).await?))
}

async fn ingest(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let packet: AccelPacket = parse_body(&body)?;
    Ok((StatusCode::ACCEPTED, Json(s.app.ingest(&id, packet).await?)))
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    since: Option<i64>,
    limit: Option<usize>,
}

async fn events(
    State(s): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
) -> Result<impl IntoResponse, ApiError> {
    let events = s
        .app
        .events(&id, q.since.unwrap_or(i64::MIN), q.limit.unwrap_or(DEFAULT_EVENT_LIMIT))
        .await?;
    Ok(Json(events))
}

#[derive(Debug, Deserialize)]
struct AlertsQuery {
    since_id: Option<u64>,
}

async fn alerts(State(s): State<Shared>, Query(q): Query<AlertsQuery>) -> impl IntoResponse {
    Json(s.app.alerts_since(q.since_id.unwrap_or(0)))
}

#[derive(Serialize)]
struct Heartbeat {
    heartbeat: i64,
}

struct StreamState {
    app: Arc<App>,
    rx: tokio::sync::watch::Receiver<u64>,
    last_sent: u64,
    ticker: tokio::time::Interval,
    pending: VecDeque<String>,
}

/// One JSON document per line: each alert fired after the connection opened
/// (or after `since_id` when given), plus a heartbeat line at a fixed period.
async fn alert_stream(State(s): State<Shared>, Query(q): Query<AlertsQuery>) -> Response {
    let mut rx = s.app.subscribe();
    let start = q.since_id.unwrap_or_else(|| *rx.borrow_and_update());
    let mut ticker = tokio::time::interval_at(tokio::time::Instant::now() + s.heartbeat, s.heartbeat);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let backlog = s.app.alerts_since(start);
    let last_sent = backlog.last().map_or(start, |a| a.alert_id);
    let pending = backlog
        .iter()
        .map(|a| serde_json::to_string(a).expect("alerts serialize"))
        .collect();
    let state = StreamState {
        app: s.app.clone(),
        rx,
        last_sent,
        ticker,
        pending,
    };
    let stream = futures::stream::unfold(state, |mut st| async move {
        loop {
            if let Some(line) = st.pending.pop_front() {
                return Some((Ok::<_, std::convert::Infallible>(format!("{line}\n")), st));
            }
            tokio::select! {
                changed = st.rx.changed() => {
                    if changed.is_err() {
                        return None;
                    }
                    for a in st.app.alerts_since(st.last_sent) {
                        st.last_sent = a.alert_id;
                        st.pending.push_back(serde_json::to_string(&a).expect("alerts serialize"));
                    }
                }
                _ = st.ticker.tick() => {
                    let hb = serde_json::to_string(&Heartbeat { heartbeat: now_ms() }).expect("heartbeat");
                    st.pending.push_back(hb);
                }
            }
        }
    });
    Response::builder()
        .status(StatusCode::OK)
        .header(header::CONTENT_TYPE, "application/x-ndjson")
        .header(header::CACHE_CONTROL, "no-cache")
        .body(Body::from_stream(stream))
        .expect("static response parts")
}

pub fn router(app: Arc<App>, heartbeat: Duration) -> Router {
    Router::new()
        .route("/v1/patients", post(register))
        .route("/v1/patients/{id}", get(get_patient))
        .route("/v1/patients/{id}/accel", post(ingest))
        .route("/v1/patients/{id}/events", get(events))
        .route("/v1/alerts", get(alerts))
        .route("/v1/alerts/stream", get(alert_stream))
        .with_state(Shared { app, heartbeat })
}

/// Loads the model and recovers the data directory described by `cfg`.
pub fn build_app(cfg: &ServiceConfig) -> Result<App, ServiceError> {
    cfg.validate()?;
    let model = load_model(&cfg.model).map_err(|e| ServiceError::Model {
        path: cfg.model.clone(),
        reason: e.to_string(),
    })?;
    let classifier = ActivityClassifier::new(model).map_err(|e| ServiceError::Model {
        path: cfg.model.clone(),
        reason: e.to_string(),
    })?;
    let (store, recovered) = Store::open(&cfg.data_dir)?;
    for w in &recovered.warnings {
        log::warn!("{w}");
    }
    App::new(classifier, cfg.alert, cfg.window_seconds, store, recovered)
}

/// A server running on the current tokio runtime.
#[derive(Debug)]
pub struct RunningServer {
    pub addr: SocketAddr,
    pub app: Arc<App>,
    task: JoinHandle<()>,
}

impl RunningServer {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections without any shutdown handshake.
    pub async fn kill(self) {
        self.task.abort();
        let _ = self.task.await;
    }
}

pub async fn spawn(app: App, bind: &str, port: u16, heartbeat: Duration) -> Result<RunningServer, ServiceError> {
    let listener = TcpListener::bind((bind, port)).await.map_err(|e| ServiceError::Bind {
        addr: format!("{bind}:{port}"),
        reason: e.to_string(),
    })?;
    let addr = listener.local_addr().map_err(|e| ServiceError::Bind {
        addr: format!("{bind}:{port}"),
        reason: e.to_string(),
    })?;
    let app = Arc::new(app);
    let routes = router(app.clone(), heartbeat);
    let task = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, routes).await {
            log::error!("server stopped: {e}");
        }
    });
    Ok(RunningServer { addr, app, task })
}

/// Starts the server described by `cfg` and runs it until ctrl-c. `on_bound`
/// receives the bound address once the socket is listening.
pub async fn run(cfg: &ServiceConfig, on_bound: impl FnOnce(SocketAddr)) -> Result<(), ServiceError> {
    let app = build_app(cfg)?;
    let server = spawn(app, &cfg.bind, cfg.port, Duration::from_secs_f64(cfg.heartbeat_seconds)).await?;
    on_bound(server.addr);
    let _ = tokio::signal::ctrl_c().await;
    server.kill().await;
    Ok(())
}
