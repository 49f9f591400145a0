//! Local HTTP service that drives the clustering pipeline for interactive
//! clients: load volumes, inspect histograms, launch clustering jobs and
//! fetch ranked clusters, shells, decimated point clouds and meshes.

mod error;
mod routes;
mod state;

pub use error::{ApiError, ApiResult, FieldErrors};
pub use routes::router;
pub use state::{AppState, JobRecord, JobStatus};

/// Schema tag carried by every JSON body.
pub const SCHEMA: &str = "volscan/1";
/// Header advertising the binary layout version of point and mesh streams.
pub const FORMAT_HEADER: &str = "x-volscan-format-version";
pub const DEFAULT_PORT: u16 = 8737;

/// Serves `state` on an already bound listener until the process ends.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    if let Ok(addr) = listener.local_addr() {
        log::info!("listening on http://{addr}");
    }
    axum::serve(listener, router(state)).await
}
