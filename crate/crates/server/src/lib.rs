//! HTTP JSON API for the community oversight service.
//!
//! Every route lives under `/v1`; an optional static web client is served
//! under `/app`. Errors are always `{"code": ..., "message": ...}` with a
//! stable `code`.

use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::Router;
use coops_core::clock::{Clock, SystemClock};
use coops_core::Coops;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

pub mod config;
pub mod error;
mod extract;
mod routes;

pub use config::{Config, ConfigError};
pub use error::ApiError;

#[derive(Clone)]
pub struct AppState {
    pub coops: Arc<Coops>,
    pub max_poll_wait: Duration,
}

/// The full application: API routes, JSON fallbacks and the optional `/app` bundle.
pub fn router(state: AppState, web_root: Option<&std::path::Path>) -> Router {
    let mut app = routes::api()
        .fallback(|| async { ApiError::not_found() })
        .method_not_allowed_fallback(|| async { ApiError::method_not_allowed() });
    if let Some(root) = web_root {
        app = app.nest_service("/app", ServeDir::new(root).append_index_html_on_directories(true));
    }
    app.with_state(state)
}

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] coops_core::Error),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
}

/// A bound, not yet running server.
pub struct Server {
    listener: TcpListener,
    app: Router,
    coops: Arc<Coops>,
    tick_every: Option<Duration>,
}

impl Server {
    pub async fn bind(config: &Config) -> Result<Self, ServerError> {
        Self::bind_with_clock(config, Arc::new(SystemClock)).await
    }

    pub async fn bind_with_clock(config: &Config, clock: Arc<dyn Clock>) -> Result<Self, ServerError> {
        let coops = Arc::new(Coops::open(config.service_config()?, clock)?);
        let listener = TcpListener::bind(config.bind)
            .await
            .map_err(|source| ServerError::Bind {
                addr: config.bind,
                source,
            })?;
        let state = AppState {
            coops: Arc::clone(&coops),
            max_poll_wait: config.max_poll_wait(),
        };
        Ok(Self {
            listener,
            app: router(state, config.web_root.as_deref()),
            coops,
            tick_every: config.pro_tip_check_interval(),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn coops(&self) -> Arc<Coops> {
        Arc::clone(&self.coops)
    }

    /// Serves until `shutdown` resolves, then drains in-flight requests.
    pub async fn run(self, shutdown: impl Future<Output = ()> + Send + 'static) -> io::Result<()> {
        let ticker = self.tick_every.map(|every| tokio::spawn(pro_tip_loop(self.coops, every)));
        let result = axum::serve(self.listener, self.app)
            .with_graceful_shutdown(shutdown)
            .await;
        if let Some(ticker) = ticker {
            ticker.abort();
        }
        result
    }
}

async fn pro_tip_loop(coops: Arc<Coops>, every: Duration) {
    let mut interval = tokio::time::interval(every);
    loop {
        interval.tick().await;
        match coops.tick_pro_tips() {
            Ok(posts) if !posts.is_empty() => tracing::info!(count = posts.len(), "posted pro-tips"),
            Ok(_) => {}
            Err(err) => tracing::error!(error = %err, "pro-tip tick failed"),
        }
    }
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut sig) => {
                sig.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = terminate => {}
    }
}
