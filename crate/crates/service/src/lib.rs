//! Service shell around the colleagues engine: HTTP API with a resumable
//! event stream, JSONL persistence, an OpenAI-compatible provider and the
//! offline command-line verbs.

pub mod api;
pub mod commands;
pub mod provider;

use std::net::SocketAddr;
use std::sync::Arc;

use anyhow::{Context, Result};
use colleagues::session::SystemClock;
use colleagues::{ChatProvider, Engine, EngineConfig, EventStore, Gateway, ProviderProfile};

pub use api::{router, AppState};

/// Builds the shared state for a server over `cfg.data_dir`.
pub fn app_state(cfg: &EngineConfig, provider: Arc<dyn ChatProvider>, profile: ProviderProfile) -> Result<Arc<AppState>> {
    let engine = Engine::new(
        Arc::new(colleagues::Catalog::builtin()),
        Gateway::new(provider, profile),
        cfg.engine.clone(),
        Arc::new(SystemClock),
    );
    let store = EventStore::open(&cfg.data_dir).with_context(|| format!("opening {}", cfg.data_dir.display()))?;
    Ok(AppState::open(Arc::new(engine), store)?)
}

/// Serves until interrupted.
pub fn serve(state: Arc<AppState>, bind: SocketAddr) -> Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(bind).await.with_context(|| format!("binding {bind}"))?;
        log::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
