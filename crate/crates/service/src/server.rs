//! HTTP control API and the JSON-lines In1/In2 stream.

use std::io;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::oneshot;

use iraas_core::control::{
    ControlError, FeedbackRouter, In1Message, In2Message, Rcf, RisDescriptor, SessionId,
    SessionRequest, WIRE_VERSION,
};
use iraas_core::optimizer::RisId;

/// Longest a feedback long-poll may block.
pub const MAX_POLL: Duration = Duration::from_secs(60);

/// What the handlers share. Every mutation goes through the one lock.
#[derive(Debug)]
pub struct Shared {
    rcf: Mutex<Rcf>,
    router: Arc<FeedbackRouter>,
}

impl Shared {
    pub fn new(rcf: Rcf) -> Self {
        Self {
            router: rcf.router(),
            rcf: Mutex::new(rcf),
        }
    }

    pub fn rcf(&self) -> MutexGuard<'_, Rcf> {
        self.rcf.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Error body with a status picked from its kind.
pub struct ApiError(pub ControlError);

pub fn status_of(e: &ControlError) -> StatusCode {
    match e {
        ControlError::Validation { .. }
        | ControlError::Malformed(_)
        | ControlError::ChecksumMismatch => StatusCode::BAD_REQUEST,
        ControlError::Conflict(_) => StatusCode::CONFLICT,
        ControlError::NotFound(_) => StatusCode::NOT_FOUND,
        ControlError::ServiceUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
        ControlError::Unauthorized(_) => StatusCode::FORBIDDEN,
        ControlError::Timeout(_) => StatusCode::GATEWAY_TIMEOUT,
        ControlError::Transport(_) | ControlError::Journal(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (status_of(&self.0), Json(self.0)).into_response()
    }
}

impl From<ControlError> for ApiError {
    fn from(e: ControlError) -> Self {
        ApiError(e)
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Serialize, Deserialize)]
pub struct Progress {
    pub iterations: u64,
    pub best_objective: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TagQuery {
    pub tag: String,
    #[serde(default)]
    pub timeout_ms: u64,
}

async fn register(
    State(s): State<Arc<Shared>>,
    Json(d): Json<RisDescriptor>,
) -> Result<Response, ApiError> {
    let id = s.rcf().register_ris(d)?;
    Ok((StatusCode::CREATED, Json(id)).into_response())
}

async fn ris_state(
    State(s): State<Arc<Shared>>,
    Path(id): Path<String>,
) -> ApiResult<iraas_core::control::RisState> {
    Ok(Json(s.rcf().ris_state(&RisId(id))?))
}

async fn create_session(
    State(s): State<Arc<Shared>>,
    Json(r): Json<SessionRequest>,
) -> ApiResult<iraas_core::control::SessionOutcome> {
    Ok(Json(s.rcf().create_session(r)?))
}

async fn terminate(
    State(s): State<Arc<Shared>>,
    Path(id): Path<u64>,
) -> ApiResult<iraas_core::control::ClosureReport> {
    Ok(Json(s.rcf().terminate_session(SessionId(id))?))
}

async fn qos(
    State(s): State<Arc<Shared>>,
    Path(id): Path<u64>,
) -> ApiResult<iraas_core::control::QosReport> {
    Ok(Json(s.rcf().session_qos_check(SessionId(id))?))
}

async fn progress(
    State(s): State<Arc<Shared>>,
    Path(id): Path<u64>,
    Json(p): Json<Progress>,
) -> Result<StatusCode, ApiError> {
    s.rcf()
        .report_progress(SessionId(id), p.iterations, p.best_objective)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn expect(State(s): State<Arc<Shared>>, Query(q): Query<TagQuery>) -> StatusCode {
    s.router.expect(&q.tag);
    StatusCode::NO_CONTENT
}

async fn cancel(State(s): State<Arc<Shared>>, Query(q): Query<TagQuery>) -> StatusCode {
    s.router.cancel(&q.tag);
    StatusCode::NO_CONTENT
}

/// Long-poll for tagged feedback. The wait runs off the async workers and
/// never holds the control lock.
async fn await_feedback(
    State(s): State<Arc<Shared>>,
    Query(q): Query<TagQuery>,
) -> ApiResult<In2Message> {
    let timeout = Duration::from_millis(q.timeout_ms).min(MAX_POLL);
    let router = Arc::clone(&s.router);
    let tag = q.tag.clone();
    let got = tokio::task::spawn_blocking(move || router.wait(&tag, timeout))
        .await
        .map_err(|e| ControlError::Transport(e.to_string()))?;
    got.map(Json)
        .ok_or_else(|| ApiError(ControlError::Timeout(format!("feedback `{}`", q.tag))))
}

pub fn http_router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/ris", post(register))
        .route("/ris/{id}", get(ris_state))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", axum::routing::delete(terminate))
        .route("/sessions/{id}/qos", get(qos))
        .route("/sessions/{id}/progress", post(progress))
        .route("/feedback", get(await_feedback))
        .route("/feedback/expectations", post(expect).delete(cancel))
        .with_state(shared)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StreamError {
    pub v: u32,
    pub error: ControlError,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Routed {
    pub v: u32,
    pub routed: bool,
}

/// Handles one line of the In1/In2 stream and returns the reply line.
/// In1 updates carry `seq`; feedback carries `epoch`.
pub fn handle_line(shared: &Shared, line: &str) -> String {
    let reply = || -> Result<String, ControlError> {
        let value: Value =
            serde_json::from_str(line).map_err(|e| ControlError::Malformed(e.to_string()))?;
        if value.get("seq").is_some() {
            let msg = In1Message::decode(line)?;
            Ok(shared.rcf().push_coefficients(&msg)?.encode())
        } else if value.get("epoch").is_some() {
            let msg = In2Message::decode(line)?;
            let routed = shared.rcf().ingest_feedback(msg)?;
            Ok(serde_json::to_string(&Routed {
                v: WIRE_VERSION,
                routed,
            })
            .expect("serializes"))
        } else {
            Err(ControlError::Malformed(
                "neither an update nor feedback".into(),
            ))
        }
    };
    reply().unwrap_or_else(|error| {
        serde_json::to_string(&StreamError {
            v: WIRE_VERSION,
            error,
        })
        .expect("serializes")
    })
}

async fn stream_connection(shared: Arc<Shared>, socket: TcpStream) -> io::Result<()> {
    let (read, mut write) = socket.into_split();
    let mut lines = BufReader::new(read).lines();
    while let Some(line) = lines.next_line().await? {
        if line.trim().is_empty() {
            continue;
        }
        let mut reply = handle_line(&shared, &line);
        reply.push('\n');
        write.write_all(reply.as_bytes()).await?;
    }
    Ok(())
}

async fn stream_loop(shared: Arc<Shared>, listener: TcpListener) {
    loop {
        let Ok((socket, _)) = listener.accept().await else {
            continue;
        };
        let shared = Arc::clone(&shared);
        tokio::spawn(async move {
            let _ = stream_connection(shared, socket).await;
        });
    }
}

/// A running service on its own runtime thread.
pub struct Server {
    pub http_addr: SocketAddr,
    pub stream_addr: SocketAddr,
    shared: Arc<Shared>,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl Server {
    /// Binds both listeners (port 0 picks a free one) and starts serving.
    pub fn start(rcf: Rcf, http: SocketAddr, stream: SocketAddr) -> io::Result<Self> {
        let http = std::net::TcpListener::bind(http)?;
        let stream = std::net::TcpListener::bind(stream)?;
        http.set_nonblocking(true)?;
        stream.set_nonblocking(true)?;
        let (http_addr, stream_addr) = (http.local_addr()?, stream.local_addr()?);
        let shared = Arc::new(Shared::new(rcf));
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let (stop, stopped) = oneshot::channel::<()>();
        let state = Arc::clone(&shared);
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let http = TcpListener::from_std(http).expect("listener");
                let stream = TcpListener::from_std(stream).expect("listener");
                tokio::spawn(stream_loop(Arc::clone(&state), stream));
                let app = http_router(state);
                tokio::select! {
                    _ = async { axum::serve(http, app).await } => {}
                    _ = stopped => {}
                }
            });
            // open connections and parked long-polls are dropped, not drained
            runtime.shutdown_background();
        });
        Ok(Self {
            http_addr,
            stream_addr,
            shared,
            stop: Some(stop),
            thread: Some(thread),
        })
    }

    pub fn shared(&self) -> &Arc<Shared> {
        &self.shared
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop_now();
    }
}
