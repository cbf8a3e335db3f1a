//! HTTP facade and file-backed persistence for risk-assessment boards.

pub mod config;
pub mod http;
pub mod store;

use std::sync::Arc;

pub use config::ServiceConfig;
pub use http::{router, AppState};
pub use store::{FileStore, StoreError};

/// Bind to the configured address and serve until the task is cancelled.
pub async fn serve(config: &ServiceConfig) -> anyhow::Result<()> {
    let state = build_state(config)?;
    let listener = tokio::net::TcpListener::bind(&config.bind).await?;
    tracing::info!(address = %listener.local_addr()?, data_dir = %config.data_dir.display(), "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

pub fn build_state(config: &ServiceConfig) -> anyhow::Result<Arc<AppState>> {
    let store = FileStore::open(&config.data_dir)?;
    Ok(AppState::new(store, config.knowledge_base.clone())?)
}
