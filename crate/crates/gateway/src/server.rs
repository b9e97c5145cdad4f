use std::future::Future;
use std::io;
use std::net::{SocketAddr, TcpListener};
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use tokio::sync::oneshot;

use crate::api::{ask_payload, error_payload, AskRequest, ErrorBody, Health, Registered};
use crate::descriptor::DatasetDescriptor;
use crate::error::GatewayError;
use crate::registry::Registry;

fn json(status: u16, body: serde_json::Value) -> Response {
    let status = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, Json(body)).into_response()
}

fn gateway_error(error: &GatewayError) -> Response {
    let (status, body) = error_payload(error, false);
    json(status, body)
}

fn internal(message: impl ToString) -> Response {
    json(
        500,
        serde_json::to_value(ErrorBody::new("INTERNAL", message)).expect("serializable"),
    )
}

async fn ask(State(registry): State<Arc<Registry>>, body: Bytes) -> Response {
    let request: AskRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return gateway_error(&GatewayError::BadRequest(e.to_string())),
    };
    let with_trace = request.trace;
    let job = move || registry.ask(&request.dataset, &request.question, request.conllu.as_deref());
    match tokio::task::spawn_blocking(job).await {
        Ok(result) => {
            let (status, body) = ask_payload(result, with_trace);
            json(status, body)
        }
        Err(e) => internal(e),
    }
}

async fn list(State(registry): State<Arc<Registry>>) -> Response {
    Json(registry.list()).into_response()
}

async fn register(State(registry): State<Arc<Registry>>, body: Bytes) -> Response {
    let text = String::from_utf8_lossy(&body).into_owned();
    let descriptor = match DatasetDescriptor::parse(&text) {
        Ok(d) => d,
        Err(e) => return gateway_error(&e),
    };
    match tokio::task::spawn_blocking(move || registry.register(descriptor)).await {
        Ok(Ok(dataset_id)) => (StatusCode::CREATED, Json(Registered { dataset_id })).into_response(),
        Ok(Err(e)) => gateway_error(&e),
        Err(e) => internal(e),
    }
}

async fn deregister(State(registry): State<Arc<Registry>>, Path(id): Path<String>) -> Response {
    match registry.deregister(&id) {
        Ok(()) => Json(Registered { dataset_id: id }).into_response(),
        Err(e) => gateway_error(&e),
    }
}

async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
    })
}

async fn not_found() -> Response {
    json(
        404,
        serde_json::to_value(ErrorBody::new("NOT_FOUND", "no such endpoint")).expect("serializable"),
    )
}

/// The public HTTP API over `registry`.
pub fn router(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/ask", post(ask))
        .route("/datasets", get(list).post(register))
        .route("/datasets/{id}", delete(deregister))
        .route("/health", get(health))
        .fallback(not_found)
        .with_state(registry)
}

/// A server running on its own thread and runtime.
#[derive(Debug)]
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl ServerHandle {
    /// Binds `bind` (e.g. `127.0.0.1:0`) and serves `router` until
    /// [`shutdown`](Self::shutdown) or drop.
    pub fn spawn(bind: &str, router: Router) -> io::Result<Self> {
        let listener = TcpListener::bind(bind)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()?;
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::Builder::new()
            .name(format!("kbqa-http-{addr}"))
            .spawn(move || {
                runtime.block_on(async move {
                    let listener = tokio::net::TcpListener::from_std(listener)?;
                    axum::serve(listener, router)
                        .with_graceful_shutdown(async {
                            let _ = rx.await;
                        })
                        .await
                })
            })?;
        Ok(ServerHandle {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections, lets in-flight requests finish and
    /// waits for the server thread.
    pub fn shutdown(mut self) -> io::Result<()> {
        self.stop()
    }

    /// Blocks until `signal` resolves, then shuts down gracefully.
    pub fn shutdown_on(mut self, signal: impl Future<Output = ()>) -> io::Result<()> {
        tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()?
            .block_on(signal);
        self.stop()
    }

    fn stop(&mut self) -> io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(thread) => thread
                .join()
                .map_err(|_| io::Error::other("server thread panicked"))?,
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}

/// Resolves on Ctrl-C.
pub async fn ctrl_c() {
    let _ = tokio::signal::ctrl_c().await;
}
