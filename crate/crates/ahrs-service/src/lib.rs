//! HTTP service exposing the estimation toolkit: gain tuning, trajectory
//! simulation, batch filter runs, multi-filter comparison, the self-test
//! suite, and streaming filter sessions that hold per-client state.
//!
//! All heavy work runs on the blocking pool; handlers stay async-thin.

mod error;
mod handlers;
mod sessions;

pub use error::ApiError;
pub use sessions::SessionStore;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::routing::{delete, get, post};
use axum::Router;

#[derive(Default)]
pub struct AppState {
    pub sessions: SessionStore,
}

/// Builds the application router.
pub fn router() -> Router {
    let state = Arc::new(AppState::default());
    Router::new()
        .route("/health", get(handlers::health))
        .route("/v1/tune", post(handlers::tune))
        .route("/v1/simulate", post(handlers::simulate))
        .route("/v1/run", post(handlers::run))
        .route("/v1/compare", post(handlers::compare))
        .route("/v1/selftest", post(handlers::selftest))
        .route("/v1/sessions", post(handlers::create_session))
        .route("/v1/sessions/{id}", get(handlers::session_info))
        .route("/v1/sessions/{id}", delete(handlers::delete_session))
        .route("/v1/sessions/{id}/step", post(handlers::step_session))
        .with_state(state)
}

/// Serves the router until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router())
        .with_graceful_shutdown(shutdown)
        .await
}

/// A service running on a background thread, bound to an ephemeral loopback
/// port. Dropping it shuts the server down.
pub struct LocalServer {
    addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl LocalServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for LocalServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(handle) = self.thread.take() {
            let _ = handle.join();
        }
    }
}

/// Spawns the service on 127.0.0.1 with an OS-assigned port.
pub fn spawn_local() -> std::io::Result<LocalServer> {
    let (addr_tx, addr_rx) = std::sync::mpsc::channel();
    let (shutdown_tx, shutdown_rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::Builder::new()
        .name("ahrs-service".into())
        .spawn(move || {
            let rt = tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()
                .expect("tokio runtime");
            rt.block_on(async move {
                let listener = match tokio::net::TcpListener::bind("127.0.0.1:0").await {
                    Ok(l) => l,
                    Err(e) => {
                        let _ = addr_tx.send(Err(e));
                        return;
                    }
                };
                let addr = listener.local_addr().expect("local addr");
                let _ = addr_tx.send(Ok(addr));
                let _ = serve(listener, async {
                    let _ = shutdown_rx.await;
                })
                .await;
            });
        })?;
    let addr = addr_rx
        .recv()
        .map_err(|_| std::io::Error::other("service thread exited before binding"))??;
    Ok(LocalServer {
        addr,
        shutdown: Some(shutdown_tx),
        thread: Some(thread),
    })
}
