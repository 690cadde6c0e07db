//! HTTP API over fleet scores, heatmaps, history, calibration and what-ifs.
//!
//! Every request reads one published [`ServiceState`]. A demo-mode tick
//! builds the next state off to the side and swaps it in whole.

pub mod error;
pub mod routes;
pub mod state;

pub use error::{ApiError, ErrorBody};
pub use routes::{router, DatacenterView, HistoryView, TickView};
pub use state::{App, ServiceState, SimLock};

use std::net::SocketAddr;
use std::sync::Arc;

use axum::http::HeaderValue;

/// Bind `addr` and serve until the process is stopped.
pub async fn serve(app: Arc<App>, addr: SocketAddr, cors_origin: Option<HeaderValue>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, demo = app.is_demo(), "listening");
    axum::serve(listener, router(app, cors_origin)).await
}
