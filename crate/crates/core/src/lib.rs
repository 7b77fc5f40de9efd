//! Analytics core for NFT collection snapshots.
//!
//! The crate is organised as a pipeline:
//!
//! - [`ingestion`] loads and validates collection snapshots (manifest + images).
//! - [`features`] extracts per-channel SIFT descriptors and matches descriptor sets
//!   with a best-bin-first k-d tree and Lowe's ratio test.
//! - [`rarity`] turns trait sets and descriptor matches into trait and image rarity.
//! - [`indicators`] replays activity logs into market, NFT and trader indicators.
//! - [`network`] builds the logical transaction network around one NFT.
//! - [`storage`] persists snapshots and caches and answers ranked list queries.
//! - [`fixtures`] generates the deterministic synthetic collections used by tests and the CLI.

pub mod eth;
pub mod features;
pub mod fixtures;
pub mod indicators;
pub mod ingestion;
pub mod network;
pub mod rarity;
pub mod storage;

pub use eth::Eth;
pub use ingestion::{
    load_snapshot, validate_snapshot, Activity, ActivityKind, CollectionInfo, CollectionSnapshot,
    IngestError, NftRecord, TraitSet, Violation,
};
