//! HTTP data service, WebSocket collaboration transport and the `plastiscope`
//! command line.

pub mod api;
pub mod cli;
pub mod ws;

use std::future::Future;
use std::path::Path;
use std::sync::Arc;

use axum::routing::get;
use axum::Router;
use tokio::net::TcpListener;
use tokio::sync::watch;
use tower_http::compression::CompressionLayer;
use tower_http::services::ServeDir;

pub use api::DataStore;
pub use ws::CollabHub;

/// Shared handles behind every route.
#[derive(Clone)]
pub struct AppState {
    /// `None` until a store with a catalog is available.
    pub data: Option<Arc<DataStore>>,
    pub collab: Arc<CollabHub>,
    pub shutdown: watch::Receiver<bool>,
}

/// A router plus the switch that ends its WebSocket sessions.
pub struct App {
    pub router: Router,
    pub collab: Arc<CollabHub>,
    shutdown: watch::Sender<bool>,
}

impl App {
    pub fn new(data: Option<Arc<DataStore>>, collab: Arc<CollabHub>, client_dir: Option<&Path>) -> App {
        let (tx, rx) = watch::channel(false);
        let state = AppState {
            data,
            collab: collab.clone(),
            shutdown: rx,
        };
        let mut router = Router::new()
            .route("/api/catalog", get(api::catalog))
            .route("/api/positions", get(api::positions))
            .route("/api/frame/{scenario}/{t}", get(api::frame))
            .route("/api/diff", get(api::diff))
            .route("/api/stats/{scenario}/{t}/{property}", get(api::stats))
            .route("/api/{*rest}", get(api::no_route))
            .route("/ws", get(ws::upgrade));
        router = match client_dir {
            Some(dir) => router.fallback_service(ServeDir::new(dir)),
            None => router.fallback(api::no_route),
        };
        let router = router.layer(CompressionLayer::new()).with_state(state);
        App {
            router,
            collab,
            shutdown: tx,
        }
    }

    /// Closes every session with leave semantics and releases open sockets.
    pub fn close_sessions(&self) {
        self.collab.shutdown();
        let _ = self.shutdown.send(true);
    }

    /// Serves until `signal` resolves, then shuts down gracefully.
    pub async fn serve(self, listener: TcpListener, signal: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
        let heartbeat = self.collab.spawn_heartbeat();
        let App { router, collab, shutdown } = self;
        let result = axum::serve(listener, router)
            .with_graceful_shutdown(async move {
                signal.await;
                tracing::info!("shutting down");
                collab.shutdown();
                let _ = shutdown.send(true);
            })
            .await;
        heartbeat.abort();
        result
    }
}
