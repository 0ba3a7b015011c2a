//! Botboard: team-scoped microblog posts with tag filtering and a journal
//! with semantic search, served over HTTP/JSON.

pub mod api;
pub mod background;
pub mod store;

pub use api::{router, AppState};
pub use background::BackgroundServer;
pub use store::{Store, StoreError, TeamSnapshot};

use std::future::Future;

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
