//! File-backed store for snapshots, descriptor caches and rarity results.
//!
//! ```text
//! <root>/collections/<id>/manifest.json
//! <root>/collections/<id>/images/...        image files, paths as in the manifest
//! <root>/collections/<id>/features/         descriptor cache
//! <root>/collections/<id>/rarity.json       scores at full precision
//! <root>/collections/<id>/rarity.csv        scores at 6 decimals
//! <root>/collections/<id>/pairdiffs.bin     pairwise per-channel differences
//! ```
//!
//! Every file is published by writing a temporary sibling and renaming it.
//! Replacing a snapshot stages a complete directory and swaps it in.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{content_hash, FeatureCache};
use crate::indicators::{IndicatorContext, NftIndicators};
use crate::ingestion::{
    check_images, load_snapshot, write_snapshot_dir, CollectionSnapshot, DirImageSource, ImageSource, IngestError,
    TraitSet, MANIFEST_FILE,
};
use crate::rarity::{weighted_rarity, PairDifference, RarityConfig, RarityRun, RarityScores, RarityWeights};

pub const COLLECTIONS_DIR: &str = "collections";
pub const FEATURES_DIR: &str = "features";
pub const RARITY_JSON: &str = "rarity.json";
pub const RARITY_CSV: &str = "rarity.csv";
pub const PAIRDIFFS_BIN: &str = "pairdiffs.bin";
pub const DEFAULT_PAGE_SIZE: usize = 20;

const PAIRDIFFS_MAGIC: &[u8; 4] = b"PDIF";
const PAIRDIFFS_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("unknown collection {0:?}")]
    UnknownCollection(String),
    #[error("rarity has not been computed for collection {0:?}")]
    RarityNotComputed(String),
    #[error("invalid collection id {0:?}")]
    InvalidId(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("corrupt {file}: {reason}")]
    Corrupt { file: String, reason: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Collection ids double as directory names.
pub fn validate_collection_id(id: &str) -> Result<(), StorageError> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(StorageError::InvalidId(id.into()))
    }
}

/// Writes `bytes` to `dest` through a temporary file and a rename.
pub fn write_atomic(dest: &Path, bytes: &[u8]) -> io::Result<()> {
    let name = dest
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "destination has no file name"))?;
    let tmp = dest.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, dest)
}

fn unique_suffix() -> String {
    let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
    format!("{}-{nanos}", std::process::id())
}

/// Persisted rarity results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RarityRecord {
    /// Hash of the manifest the scores were computed from.
    pub snapshot_hash: String,
    pub params_hash: String,
    pub scores: Vec<RarityScores>,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    /// Opens a data directory, creating it if needed.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StorageError> {
        let root = root.into();
        fs::create_dir_all(root.join(COLLECTIONS_DIR))?;
        Ok(Store { root })
    }

    /// Opens an existing data directory without creating anything.
    pub fn open_existing(root: impl Into<PathBuf>) -> Result<Self, StorageError> {
        let root = root.into();
        let dir = root.join(COLLECTIONS_DIR);
        if !dir.is_dir() {
            return Err(StorageError::Io(io::Error::new(
                io::ErrorKind::NotFound,
                format!("{} is not a data directory (missing {COLLECTIONS_DIR}/)", root.display()),
            )));
        }
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn collection_dir(&self, id: &str) -> PathBuf {
        self.root.join(COLLECTIONS_DIR).join(id)
    }

    fn existing_dir(&self, id: &str) -> Result<PathBuf, StorageError> {
        validate_collection_id(id).map_err(|_| StorageError::UnknownCollection(id.into()))?;
        let dir = self.collection_dir(id);
        if dir.join(MANIFEST_FILE).is_file() {
            Ok(dir)
        } else {
            Err(StorageError::UnknownCollection(id.into()))
        }
    }

    /// Sorted ids of all stored collections.
    pub fn list_collections(&self) -> Result<Vec<String>, StorageError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(self.root.join(COLLECTIONS_DIR))? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if validate_collection_id(&name).is_ok() && entry.path().join(MANIFEST_FILE).is_file() {
                ids.push(name);
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Stores a snapshot and its images, replacing any previous version.
    ///
    /// The descriptor cache survives replacement; rarity results do not.
    pub fn put_snapshot(&self, s: &CollectionSnapshot, images: &dyn ImageSource) -> Result<String, StorageError> {
        let id = s.id().to_string();
        validate_collection_id(&id)?;
        check_images(s, images)?;
        if self.holds_identical(s, images)? {
            return Ok(id);
        }
        let parent = self.root.join(COLLECTIONS_DIR);
        let suffix = unique_suffix();
        let staging = parent.join(format!(".staging-{id}-{suffix}"));
        if let Err(e) = write_snapshot_dir(&staging, s, images) {
            let _ = fs::remove_dir_all(&staging);
            return Err(e.into());
        }

        let dest = self.collection_dir(&id);
        if dest.exists() {
            let old_features = dest.join(FEATURES_DIR);
            if old_features.is_dir() {
                fs::rename(&old_features, staging.join(FEATURES_DIR))?;
            }
            let trash = parent.join(format!(".old-{id}-{suffix}"));
            fs::rename(&dest, &trash)?;
            fs::rename(&staging, &dest)?;
            fs::remove_dir_all(trash)?;
        } else {
            fs::rename(&staging, &dest)?;
        }
        Ok(id)
    }

    /// True when the stored manifest and every referenced image already
    /// match byte for byte.
    fn holds_identical(&self, s: &CollectionSnapshot, images: &dyn ImageSource) -> Result<bool, StorageError> {
        let dir = self.collection_dir(s.id());
        match fs::read(dir.join(MANIFEST_FILE)) {
            Ok(bytes) if bytes == s.to_manifest_json().as_bytes() => {}
            Ok(_) => return Ok(false),
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(false),
            Err(e) => return Err(e.into()),
        }
        let stored = DirImageSource::new(dir);
        for nft in &s.nfts {
            if stored.image_bytes(&nft.image_ref).ok() != Some(images.image_bytes(&nft.image_ref)?) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn get_snapshot(&self, id: &str) -> Result<CollectionSnapshot, StorageError> {
        let dir = self.existing_dir(id)?;
        Ok(load_snapshot(dir)?)
    }

    /// Hash of the stored manifest bytes.
    pub fn snapshot_hash(&self, id: &str) -> Result<String, StorageError> {
        let dir = self.existing_dir(id)?;
        Ok(content_hash(&fs::read(dir.join(MANIFEST_FILE))?))
    }

    /// Hashes of the manifest and, when present, the rarity record. Changes
    /// whenever either is replaced.
    pub fn revision(&self, id: &str) -> Result<(String, Option<String>), StorageError> {
        let dir = self.existing_dir(id)?;
        let manifest = content_hash(&fs::read(dir.join(MANIFEST_FILE))?);
        let rarity = match fs::read(dir.join(RARITY_JSON)) {
            Ok(bytes) => Some(content_hash(&bytes)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => None,
            Err(e) => return Err(e.into()),
        };
        Ok((manifest, rarity))
    }

    pub fn images(&self, id: &str) -> Result<DirImageSource, StorageError> {
        Ok(DirImageSource::new(self.existing_dir(id)?))
    }

    pub fn feature_cache(&self, id: &str) -> Result<FeatureCache, StorageError> {
        Ok(FeatureCache::new(self.existing_dir(id)?.join(FEATURES_DIR)))
    }

    /// Writes `rarity.json`, `rarity.csv` and `pairdiffs.bin`.
    pub fn put_rarity(&self, id: &str, cfg: &RarityConfig, run: &RarityRun) -> Result<RarityRecord, StorageError> {
        let dir = self.existing_dir(id)?;
        let record = RarityRecord {
            snapshot_hash: self.snapshot_hash(id)?,
            params_hash: cfg.params_hash(),
            scores: run.scores.clone(),
        };
        write_atomic(
            &dir.join(PAIRDIFFS_BIN),
            &encode_pairdiffs(&record.snapshot_hash, &record.params_hash, &run.pairs),
        )?;
        write_atomic(&dir.join(RARITY_CSV), crate::rarity::to_csv(&record.scores).as_bytes())?;
        let json = serde_json::to_vec_pretty(&record).map_err(io::Error::other)?;
        write_atomic(&dir.join(RARITY_JSON), &json)?;
        Ok(record)
    }

    /// Rarity results for the current snapshot; stale results count as missing.
    pub fn get_rarity(&self, id: &str) -> Result<RarityRecord, StorageError> {
        let dir = self.existing_dir(id)?;
        let text = match fs::read_to_string(dir.join(RARITY_JSON)) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StorageError::RarityNotComputed(id.into()))
            }
            Err(e) => return Err(e.into()),
        };
        let record: RarityRecord = serde_json::from_str(&text).map_err(|e| StorageError::Corrupt {
            file: RARITY_JSON.into(),
            reason: e.to_string(),
        })?;
        if record.snapshot_hash != self.snapshot_hash(id)? {
            return Err(StorageError::RarityNotComputed(id.into()));
        }
        Ok(record)
    }

    /// Cached pair differences if they match the current snapshot and `params_hash`.
    pub fn get_pair_diffs(&self, id: &str, params_hash: &str) -> Result<Option<Vec<PairDifference>>, StorageError> {
        let dir = self.existing_dir(id)?;
        let bytes = match fs::read(dir.join(PAIRDIFFS_BIN)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let (snap, params, pairs) = decode_pairdiffs(&bytes).map_err(|reason| StorageError::Corrupt {
            file: PAIRDIFFS_BIN.into(),
            reason,
        })?;
        Ok((snap == self.snapshot_hash(id)? && params == params_hash).then_some(pairs))
    }

    /// Snapshot, rarity (if current) and indicators at the snapshot time.
    pub fn view(&self, id: &str) -> Result<CollectionView, StorageError> {
        let snapshot = self.get_snapshot(id)?;
        let rarity = match self.get_rarity(id) {
            Ok(r) => Some(r),
            Err(StorageError::RarityNotComputed(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(CollectionView::new(snapshot, rarity, self.collection_dir(id)))
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn encode_pairdiffs(snapshot_hash: &str, params_hash: &str, pairs: &[PairDifference]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pairs.len() * 48);
    out.extend_from_slice(PAIRDIFFS_MAGIC);
    out.extend_from_slice(&PAIRDIFFS_VERSION.to_le_bytes());
    put_str(&mut out, snapshot_hash);
    put_str(&mut out, params_hash);
    out.extend_from_slice(&(pairs.len() as u64).to_le_bytes());
    for p in pairs {
        put_str(&mut out, &p.token_a);
        put_str(&mut out, &p.token_b);
        for v in [p.dif_r, p.dif_g, p.dif_b] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        if self.0.len() < n {
            return Err("truncated".into());
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| e.to_string())
    }
}

/// Returns `(snapshot_hash, params_hash, pairs)`.
pub fn decode_pairdiffs(bytes: &[u8]) -> Result<(String, String, Vec<PairDifference>), String> {
    let mut r = Reader(bytes);
    if r.take(4)? != PAIRDIFFS_MAGIC {
        return Err("bad magic".into());
    }
    let version = r.u32()?;
    if version != PAIRDIFFS_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let snap = r.string()?;
    let params = r.string()?;
    let n = r.u64()? as usize;
    let mut pairs = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        pairs.push(PairDifference {
            token_a: r.string()?,
            token_b: r.string()?,
            dif_r: r.f64()?,
            dif_g: r.f64()?,
            dif_b: r.f64()?,
        });
    }
    if !r.0.is_empty() {
        return Err("trailing bytes".into());
    }
    Ok((snap, params, pairs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortKey {
    WeightedRarity,
    TraitRarity,
    ImageRarity,
    LastPrice,
    TokenId,
}

impl FromStr for SortKey {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown sort key {s:?}"))
    }
}

/// Numeric columns available to range filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterField {
    TraitRarity,
    ImageRarity,
    WeightedRarity,
    PastOwners,
    CurrentHoldTime,
    LongestHoldTime,
    LastPrice,
    PriceRank,
    TraitRarityRank,
    ImageRarityRank,
    SellersPnl,
}

impl FromStr for FilterField {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown filter field {s:?}"))
    }
}

/// Inclusive range on one field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub field: FilterField,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListQuery {
    pub sort_key: SortKey,
    pub descending: bool,
    pub weights: RarityWeights,
    pub filters: Vec<Filter>,
    pub page: usize,
    pub page_size: usize,
}

impl Default for ListQuery {
    fn default() -> Self {
        ListQuery {
            sort_key: SortKey::WeightedRarity,
            descending: true,
            weights: RarityWeights::default(),
            filters: Vec::new(),
            page: 0,
            page_size: DEFAULT_PAGE_SIZE,
        }
    }
}

impl ListQuery {
    pub fn validate(&self) -> Result<(), StorageError> {
        if self.page_size == 0 {
            return Err(StorageError::InvalidQuery("page_size must be at least 1".into()));
        }
        for f in &self.filters {
            if f.min.is_nan() || f.max.is_nan() || f.min > f.max {
                return Err(StorageError::InvalidQuery(format!(
                    "filter on {:?} has min {} > max {}",
                    f.field, f.min, f.max
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NftRow {
    pub token_id: String,
    pub image: String,
    pub traits: TraitSet,
    pub trait_rarity: f64,
    pub image_rarity: f64,
    pub weighted_rarity: f64,
    pub indicators: NftIndicators,
}

impl NftRow {
    pub fn field(&self, f: FilterField) -> f64 {
        let i = &self.indicators;
        let rank = |r: Option<usize>| r.map(|v| v as f64).unwrap_or(f64::NAN);
        match f {
            FilterField::TraitRarity => self.trait_rarity,
            FilterField::ImageRarity => self.image_rarity,
            FilterField::WeightedRarity => self.weighted_rarity,
            FilterField::PastOwners => i.past_owners as f64,
            FilterField::CurrentHoldTime => i.current_hold_time as f64,
            FilterField::LongestHoldTime => i.longest_hold_time as f64,
            FilterField::LastPrice => i.last_price.as_eth(),
            FilterField::PriceRank => i.price_rank as f64,
            FilterField::TraitRarityRank => rank(i.trait_rarity_rank),
            FilterField::ImageRarityRank => rank(i.image_rarity_rank),
            FilterField::SellersPnl => i.sellers_pnl.as_eth(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub collection_id: String,
    /// Rows passing the filters, across all pages.
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
    pub rows: Vec<NftRow>,
}

/// An immutable, query-ready view of one stored collection.
#[derive(Debug, Clone)]
pub struct CollectionView {
    pub snapshot: CollectionSnapshot,
    pub rarity: Option<RarityRecord>,
    /// Indicators at the snapshot time, in collection order.
    pub indicators: Vec<NftIndicators>,
    pub dir: PathBuf,
}

impl CollectionView {
    pub fn new(snapshot: CollectionSnapshot, rarity: Option<RarityRecord>, dir: PathBuf) -> Self {
        let ctx = IndicatorContext::new(&snapshot, snapshot.info.snapshot_at);
        let indicators = ctx.nft_indicators_all(rarity.as_ref().map(|r| r.scores.as_slice()));
        CollectionView {
            snapshot,
            rarity,
            indicators,
            dir,
        }
    }

    pub fn id(&self) -> &str {
        self.snapshot.id()
    }

    /// All rows at the given weights, in collection order.
    pub fn rows(&self, weights: RarityWeights) -> Result<Vec<NftRow>, StorageError> {
        self.rows_with(weights, &self.indicators)
    }

    /// Like [`CollectionView::rows`], with indicators replayed up to `as_of`.
    pub fn rows_at(&self, weights: RarityWeights, as_of: i64) -> Result<Vec<NftRow>, StorageError> {
        if as_of == self.snapshot.info.snapshot_at {
            return self.rows(weights);
        }
        let scores = self.rarity.as_ref().map(|r| r.scores.as_slice());
        let indicators = IndicatorContext::new(&self.snapshot, as_of).nft_indicators_all(scores);
        self.rows_with(weights, &indicators)
    }

    fn rows_with(&self, weights: RarityWeights, indicators: &[NftIndicators]) -> Result<Vec<NftRow>, StorageError> {
        let rarity = self
            .rarity
            .as_ref()
            .ok_or_else(|| StorageError::RarityNotComputed(self.id().into()))?;
        let by_token: HashMap<&str, &RarityScores> =
            rarity.scores.iter().map(|s| (s.token_id.as_str(), s)).collect();
        self.snapshot
            .nfts
            .iter()
            .zip(indicators)
            .map(|(nft, ind)| {
                let s = by_token
                    .get(nft.token_id.as_str())
                    .ok_or_else(|| StorageError::RarityNotComputed(self.id().into()))?;
                Ok(NftRow {
                    token_id: nft.token_id.clone(),
                    image: nft.image_ref.clone(),
                    traits: nft.traits.clone(),
                    trait_rarity: s.trait_rarity,
                    image_rarity: s.image_rarity,
                    weighted_rarity: weighted_rarity(s, weights),
                    indicators: ind.clone(),
                })
            })
            .collect()
    }

    /// Filtered rows in `(sort key, token id)` order.
    pub fn ranked_rows(&self, q: &ListQuery) -> Result<Vec<NftRow>, StorageError> {
        q.validate()?;
        let mut rows: Vec<NftRow> = self
            .rows(q.weights)?
            .into_iter()
            .filter(|r| {
                q.filters.iter().all(|f| {
                    let v = r.field(f.field);
                    v >= f.min && v <= f.max
                })
            })
            .collect();
        rows.sort_by(|a, b| compare_rows(a, b, q.sort_key, q.descending));
        Ok(rows)
    }

    pub fn query(&self, q: &ListQuery) -> Result<Page, StorageError> {
        let rows = self.ranked_rows(q)?;
        let total = rows.len();
        let start = q.page.saturating_mul(q.page_size).min(total);
        let end = start.saturating_add(q.page_size).min(total);
        Ok(Page {
            collection_id: self.id().into(),
            total,
            page: q.page,
            page_size: q.page_size,
            rows: rows[start..end].to_vec(),
        })
    }
}

fn compare_rows(a: &NftRow, b: &NftRow, key: SortKey, descending: bool) -> Ordering {
    let primary = match key {
        SortKey::WeightedRarity => a.weighted_rarity.total_cmp(&b.weighted_rarity),
        SortKey::TraitRarity => a.trait_rarity.total_cmp(&b.trait_rarity),
        SortKey::ImageRarity => a.image_rarity.total_cmp(&b.image_rarity),
        SortKey::LastPrice => a.indicators.last_price.cmp(&b.indicators.last_price),
        SortKey::TokenId => Ordering::Equal,
    };
    let primary = if descending { primary.reverse() } else { primary };
    let tie = a.token_id.cmp(&b.token_id);
    if key == SortKey::TokenId && descending {
        return tie.reverse();
    }
    primary.then(tie)
}

/// Ranking used by both the CLI and the service: weighted rarity,
/// descending, ties by token id.
pub fn ranking(view: &CollectionView, weights: RarityWeights) -> Result<Vec<NftRow>, StorageError> {
    view.ranked_rows(&ListQuery {
        weights,
        ..ListQuery::default()
    })
}
