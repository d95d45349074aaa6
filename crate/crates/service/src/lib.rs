//! HTTP service for the classroom sensor platform: accounts and classes,
//! the inquiry workflow over SQLite, photo storage, analytics and a gateway
//! that relays live device measurements.

pub mod api;
pub mod auth;
pub mod error;
pub mod gateway;
pub mod state;
pub mod store;

pub use api::router;
pub use error::ApiError;
pub use gateway::{probe, DeviceEntry, Gateway, GatewayConfig, StreamRecord};
pub use state::{AppState, LoadError, ServiceConfig, StartError};
pub use store::Store;

/// Serves `state` on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
