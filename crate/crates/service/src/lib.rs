//! Read-only HTTP JSON API over an nftscope data directory.
//!
//! Every data endpoint lives under `/api/v1`; images are served from
//! `/images/{collection}/{image_ref}`.

mod api;
mod catalog;
pub mod config;
mod error;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::http::{HeaderValue, Method};
use axum::routing::get;
use axum::Router;
use nftscope_core::storage::{StorageError, Store};
use thiserror::Error;
use tokio::net::TcpListener;
use tower_http::cors::{AllowOrigin, CorsLayer};

pub use api::{
    axis_unit, indicator_matrix, summarize, ActivityNetwork, AppState, Axis, CollectionSummary,
    FocusNft, IndicatorMatrix, MatrixRow, NftPage, NftRowOut, MAX_PAGE_SIZE,
};
pub use catalog::Catalog;
pub use config::{ConfigError, ServiceConfig};
pub use error::ApiError;

/// Published JSON schemas, by endpoint.
pub const SCHEMAS: [(&str, &str); 6] = [
    ("collections", include_str!("../schemas/collections.schema.json")),
    ("market", include_str!("../schemas/market.schema.json")),
    ("nfts", include_str!("../schemas/nfts.schema.json")),
    ("indicator-matrix", include_str!("../schemas/indicator-matrix.schema.json")),
    ("activity-network", include_str!("../schemas/activity-network.schema.json")),
    ("error", include_str!("../schemas/error.schema.json")),
];

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("data directory {path} is not usable: {source}")]
    DataDir { path: String, source: StorageError },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid CORS origin {0:?}")]
    CorsOrigin(String),
    #[error("port {port} on {addr} is already in use")]
    PortInUse { addr: SocketAddr, port: u16 },
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("server failed: {0}")]
    Io(#[from] std::io::Error),
}

fn cors(origins: &[String]) -> Result<CorsLayer, ServeError> {
    let layer = CorsLayer::new().allow_methods([Method::GET]);
    if origins.iter().any(|o| o == "*") {
        return Ok(layer.allow_origin(AllowOrigin::any()));
    }
    let list = origins
        .iter()
        .map(|o| HeaderValue::from_str(o).map_err(|_| ServeError::CorsOrigin(o.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(layer.allow_origin(AllowOrigin::list(list)))
}

pub fn router(state: AppState, cors_origins: &[String]) -> Result<Router, ServeError> {
    Ok(Router::new()
        .route("/api/v1/collections", get(api::collections))
        .route("/api/v1/collections/{id}/market", get(api::market))
        .route("/api/v1/collections/{id}/nfts", get(api::nfts))
        .route("/api/v1/collections/{id}/indicator-matrix", get(api::matrix))
        .route("/api/v1/nfts/{collection}/{token}/activity-network", get(api::activity_network))
        .route("/images/{collection}/{*path}", get(api::image))
        .fallback(api::not_found)
        .layer(cors(cors_origins)?)
        .with_state(state))
}

/// Builds the application for `config`. The data directory must already
/// exist with a `collections/` subdirectory.
pub fn app(config: &ServiceConfig) -> Result<Router, ServeError> {
    config.validate()?;
    let store = Store::open_existing(&config.data_dir).map_err(|source| ServeError::DataDir {
        path: config.data_dir.display().to_string(),
        source,
    })?;
    let state = AppState {
        catalog: Arc::new(Catalog::new(store)),
        axes: config.axes.clone().into(),
        whale_policy: config.whale_policy()?,
    };
    router(state, &config.cors_origins)
}

pub async fn bind(config: &ServiceConfig) -> Result<TcpListener, ServeError> {
    let addr = SocketAddr::new(config.bind, config.port);
    TcpListener::bind(addr).await.map_err(|source| {
        if source.kind() == std::io::ErrorKind::AddrInUse {
            ServeError::PortInUse { addr, port: config.port }
        } else {
            ServeError::Bind { addr, source }
        }
    })
}

/// Validates the data directory, binds, and serves until Ctrl-C.
pub async fn serve(config: &ServiceConfig) -> Result<(), ServeError> {
    let app = app(config)?;
    let listener = bind(config).await?;
    eprintln!("nftscope-service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
