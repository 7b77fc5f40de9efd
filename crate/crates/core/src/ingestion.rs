//! Collection snapshots: manifest parsing, validation and normalization.
//!
//! A snapshot directory holds a `manifest.json` and an `images/` directory:
//!
//! ```text
//! manifest.json   { "collection": {...}, "nfts": [ {token_id, image, traits, activities}, ... ] }
//! images/         PNG or JPEG rasters referenced by relative path
//! ```
//!
//! Loading validates every invariant; violations that make the data unusable
//! are returned as errors, while recoverable ones (a transfer that carries a
//! price) are normalized and reported as warnings.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eth::Eth;
use crate::features::decode_rgb;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionInfo {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub official_url: String,
    /// UTC seconds.
    pub created_at: i64,
    /// UTC seconds; the "now" used for all hold-time and valuation math.
    pub snapshot_at: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionSnapshot {
    #[serde(rename = "collection")]
    pub info: CollectionInfo,
    pub nfts: Vec<NftRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NftRecord {
    pub token_id: String,
    /// Path of the image relative to the snapshot directory.
    #[serde(rename = "image")]
    pub image_ref: String,
    #[serde(default)]
    pub traits: TraitSet,
    #[serde(default)]
    pub activities: Vec<Activity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivityKind {
    Mint,
    Sale,
    Transfer,
}

impl fmt::Display for ActivityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActivityKind::Mint => "mint",
            ActivityKind::Sale => "sale",
            ActivityKind::Transfer => "transfer",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activity {
    pub kind: ActivityKind,
    pub timestamp: i64,
    #[serde(default)]
    pub price_eth: Eth,
    #[serde(default, rename = "from")]
    pub from_address: String,
    #[serde(rename = "to")]
    pub to_address: String,
    #[serde(default)]
    pub tx_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Trait {
    #[serde(rename = "type")]
    pub trait_type: String,
    pub value: String,
}

impl Trait {
    pub fn new(trait_type: impl Into<String>, value: impl Into<String>) -> Self {
        Trait {
            trait_type: trait_type.into(),
            value: value.into(),
        }
    }
}

/// A set of `(type, value)` trait labels. Duplicates collapse on insertion.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TraitSet(BTreeSet<Trait>);

impl TraitSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, t: Trait) -> bool {
        self.0.insert(t)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Trait> {
        self.0.iter()
    }

    pub fn intersection_len(&self, other: &TraitSet) -> usize {
        self.0.intersection(&other.0).count()
    }
}

impl FromIterator<Trait> for TraitSet {
    fn from_iter<I: IntoIterator<Item = Trait>>(iter: I) -> Self {
        TraitSet(iter.into_iter().collect())
    }
}

impl<A: Into<String>, B: Into<String>> FromIterator<(A, B)> for TraitSet {
    fn from_iter<I: IntoIterator<Item = (A, B)>>(iter: I) -> Self {
        iter.into_iter().map(|(t, v)| Trait::new(t, v)).collect()
    }
}

impl CollectionSnapshot {
    pub fn id(&self) -> &str {
        &self.info.id
    }

    pub fn len(&self) -> usize {
        self.nfts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nfts.is_empty()
    }

    pub fn nft(&self, token_id: &str) -> Option<&NftRecord> {
        self.nfts.iter().find(|n| n.token_id == token_id)
    }

    pub fn nft_index(&self, token_id: &str) -> Option<usize> {
        self.nfts.iter().position(|n| n.token_id == token_id)
    }

    pub fn to_manifest_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("snapshot serializes");
        s.push('\n');
        s
    }
}

impl NftRecord {
    /// Activities with `timestamp <= as_of`.
    pub fn activities_until(&self, as_of: i64) -> &[Activity] {
        let end = self.activities.partition_point(|a| a.timestamp <= as_of);
        &self.activities[..end]
    }

    /// Holder after replaying every activity up to `as_of`.
    pub fn holder_at(&self, as_of: i64) -> Option<&str> {
        self.activities_until(as_of)
            .last()
            .map(|a| a.to_address.as_str())
    }

    pub fn current_holder(&self) -> Option<&str> {
        self.activities.last().map(|a| a.to_address.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    EmptyCollectionId,
    EmptyTokenId,
    DuplicateTokenId,
    ActivityAfterSnapshot,
    ActivitiesUnsorted,
    FirstActivityNotMint,
    MintNotFirst,
    MintWithSender,
    BrokenOwnershipChain,
    NegativePrice,
    PricedTransfer,
    EmptyToAddress,
}

impl Rule {
    pub fn severity(self) -> Severity {
        match self {
            Rule::PricedTransfer => Severity::Warning,
            _ => Severity::Error,
        }
    }

    fn is_ordering(self) -> bool {
        matches!(
            self,
            Rule::ActivitiesUnsorted
                | Rule::FirstActivityNotMint
                | Rule::MintNotFirst
                | Rule::BrokenOwnershipChain
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub token_id: Option<String>,
    pub rule: Rule,
    pub severity: Severity,
    pub detail: String,
}

impl Violation {
    fn new(token_id: Option<&str>, rule: Rule, detail: impl Into<String>) -> Self {
        Violation {
            token_id: token_id.map(str::to_owned),
            rule,
            severity: rule.severity(),
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        match &self.token_id {
            Some(t) => write!(f, "{level}: token {t}: {:?}: {}", self.rule, self.detail),
            None => write!(f, "{level}: collection: {:?}: {}", self.rule, self.detail),
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("no manifest.json found in {0}")]
    MissingManifest(PathBuf),
    #[error("malformed manifest at line {line}, column {column}: {message}")]
    MalformedManifest {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("broken image reference for token(s): {}", tokens.join(", "))]
    BrokenImageRef { tokens: Vec<String> },
    #[error("activity order violation: {}", join_violations(.0))]
    ActivityOrderViolation(Vec<Violation>),
    #[error("invalid snapshot: {}", join_violations(.0))]
    InvalidSnapshot(Vec<Violation>),
    #[error("remote collection unreachable: {0}")]
    Unreachable(String),
    #[error("remote payload does not match the snapshot schema: {0}")]
    RemoteSchemaMismatch(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Checks every snapshot invariant. An empty result means the snapshot is valid.
pub fn validate_snapshot(s: &CollectionSnapshot) -> Vec<Violation> {
    let mut out = Vec::new();
    if s.info.id.trim().is_empty() {
        out.push(Violation::new(None, Rule::EmptyCollectionId, "collection id is empty"));
    }

    let mut seen = HashSet::new();
    for nft in &s.nfts {
        let tok = Some(nft.token_id.as_str());
        if nft.token_id.is_empty() {
            out.push(Violation::new(tok, Rule::EmptyTokenId, "token id is empty"));
        }
        if !seen.insert(nft.token_id.as_str()) {
            out.push(Violation::new(tok, Rule::DuplicateTokenId, "token id appears more than once"));
        }

        for (i, a) in nft.activities.iter().enumerate() {
            if a.timestamp > s.info.snapshot_at {
                out.push(Violation::new(
                    tok,
                    Rule::ActivityAfterSnapshot,
                    format!("activity {i} at {} is after snapshot_at {}", a.timestamp, s.info.snapshot_at),
                ));
            }
            if a.price_eth.is_negative() {
                out.push(Violation::new(tok, Rule::NegativePrice, format!("activity {i} has price {}", a.price_eth)));
            }
            if a.kind == ActivityKind::Transfer && !a.price_eth.is_zero() {
                out.push(Violation::new(
                    tok,
                    Rule::PricedTransfer,
                    format!("transfer {i} carries price {}; treated as 0", a.price_eth),
                ));
            }
            if a.to_address.is_empty() {
                out.push(Violation::new(tok, Rule::EmptyToAddress, format!("activity {i} has no recipient")));
            }
            if a.kind == ActivityKind::Mint {
                if i > 0 {
                    out.push(Violation::new(tok, Rule::MintNotFirst, format!("mint at position {i}")));
                }
                if !a.from_address.is_empty() {
                    out.push(Violation::new(tok, Rule::MintWithSender, format!("mint {i} has a sender")));
                }
            } else if i == 0 {
                out.push(Violation::new(
                    tok,
                    Rule::FirstActivityNotMint,
                    format!("first activity is a {} without a prior mint", a.kind),
                ));
            }
            if i > 0 {
                let prev = &nft.activities[i - 1];
                if a.timestamp < prev.timestamp {
                    out.push(Violation::new(
                        tok,
                        Rule::ActivitiesUnsorted,
                        format!("activity {i} at {} precedes activity {} at {}", a.timestamp, i - 1, prev.timestamp),
                    ));
                }
                if prev.to_address != a.from_address {
                    out.push(Violation::new(
                        tok,
                        Rule::BrokenOwnershipChain,
                        format!("activity {i} is sent by {:?} but the holder is {:?}", a.from_address, prev.to_address),
                    ));
                }
            }
        }
    }
    out
}

/// Sets the price of every transfer to zero.
pub fn normalize_snapshot(s: &mut CollectionSnapshot) {
    for a in s.nfts.iter_mut().flat_map(|n| n.activities.iter_mut()) {
        if a.kind == ActivityKind::Transfer {
            a.price_eth = Eth::ZERO;
        }
    }
}

/// A validated snapshot with the warnings raised while loading it.
#[derive(Debug, Clone)]
pub struct LoadReport {
    pub snapshot: CollectionSnapshot,
    pub warnings: Vec<Violation>,
}

pub fn parse_manifest(text: &str) -> Result<CollectionSnapshot, IngestError> {
    serde_json::from_str(text).map_err(|e| IngestError::MalformedManifest {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Validates, normalizes and classifies violations into the load error contract.
pub fn finalize_snapshot(mut snapshot: CollectionSnapshot) -> Result<LoadReport, IngestError> {
    let violations = validate_snapshot(&snapshot);
    let (warnings, errors): (Vec<_>, Vec<_>) = violations
        .into_iter()
        .partition(|v| v.severity == Severity::Warning);
    if !errors.is_empty() {
        let (ordering, other): (Vec<_>, Vec<_>) = errors.into_iter().partition(|v| v.rule.is_ordering());
        if !ordering.is_empty() {
            return Err(IngestError::ActivityOrderViolation(ordering));
        }
        return Err(IngestError::InvalidSnapshot(other));
    }
    normalize_snapshot(&mut snapshot);
    Ok(LoadReport { snapshot, warnings })
}

/// Loads a snapshot directory. See [`load_snapshot_report`] for the warnings.
pub fn load_snapshot(path: impl AsRef<Path>) -> Result<CollectionSnapshot, IngestError> {
    load_snapshot_report(path).map(|r| r.snapshot)
}

pub fn load_snapshot_report(path: impl AsRef<Path>) -> Result<LoadReport, IngestError> {
    let dir = path.as_ref();
    let manifest = dir.join(MANIFEST_FILE);
    if !manifest.is_file() {
        return Err(IngestError::MissingManifest(dir.to_path_buf()));
    }
    let text = fs::read_to_string(&manifest)?;
    let snapshot = parse_manifest(&text)?;
    let report = finalize_snapshot(snapshot)?;
    check_images(&report.snapshot, &DirImageSource::new(dir))?;
    Ok(report)
}

/// Fails with [`IngestError::BrokenImageRef`] listing every token whose image
/// is missing, escapes the snapshot directory or cannot be decoded.
pub fn check_images(s: &CollectionSnapshot, images: &dyn ImageSource) -> Result<(), IngestError> {
    let broken: Vec<String> = s
        .nfts
        .iter()
        .filter(|n| {
            images
                .image_bytes(&n.image_ref)
                .ok()
                .and_then(|b| decode_rgb(&b).ok())
                .is_none()
        })
        .map(|n| n.token_id.clone())
        .collect();
    if broken.is_empty() {
        Ok(())
    } else {
        Err(IngestError::BrokenImageRef { tokens: broken })
    }
}

/// Where image bytes for a snapshot come from.
pub trait ImageSource: Sync {
    fn image_bytes(&self, image_ref: &str) -> io::Result<Vec<u8>>;
}

/// Images stored under a snapshot directory.
#[derive(Debug, Clone)]
pub struct DirImageSource {
    root: PathBuf,
}

impl DirImageSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirImageSource { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, image_ref: &str) -> io::Result<PathBuf> {
        resolve_relative(&self.root, image_ref)
    }
}

impl ImageSource for DirImageSource {
    fn image_bytes(&self, image_ref: &str) -> io::Result<Vec<u8>> {
        fs::read(self.resolve(image_ref)?)
    }
}

impl ImageSource for BTreeMap<String, Vec<u8>> {
    fn image_bytes(&self, image_ref: &str) -> io::Result<Vec<u8>> {
        self.get(image_ref)
            .cloned()
            .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, image_ref.to_owned()))
    }
}

/// Joins a relative reference onto `root`, rejecting absolute paths and `..`.
pub fn resolve_relative(root: &Path, rel: &str) -> io::Result<PathBuf> {
    let p = Path::new(rel);
    if rel.is_empty() || !p.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir)) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("image reference {rel:?} must be a relative path inside the snapshot"),
        ));
    }
    Ok(root.join(p))
}

/// Writes a snapshot directory: manifest plus the image files it references.
pub fn write_snapshot_dir(
    dir: &Path,
    s: &CollectionSnapshot,
    images: &dyn ImageSource,
) -> Result<(), IngestError> {
    fs::create_dir_all(dir)?;
    for nft in &s.nfts {
        let dest = resolve_relative(dir, &nft.image_ref)?;
        if let Some(parent) = dest.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(dest, images.image_bytes(&nft.image_ref)?)?;
    }
    fs::write(dir.join(MANIFEST_FILE), s.to_manifest_json())?;
    Ok(())
}

/// A source of collection snapshots outside the local filesystem layout.
pub trait RemoteClient {
    fn fetch_manifest(&self, collection_id: &str) -> Result<String, IngestError>;
    fn fetch_image(&self, collection_id: &str, image_ref: &str) -> Result<Vec<u8>, IngestError>;
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRemoteConfig {
    /// Directory holding one snapshot directory per collection id.
    pub base_dir: PathBuf,
    /// Serve every activity log reversed, to exercise validation.
    #[serde(default)]
    pub emit_out_of_order: bool,
}

/// Offline stand-in for a marketplace API, backed by snapshot directories.
#[derive(Debug, Clone)]
pub struct MockRemoteClient {
    config: MockRemoteConfig,
}

impl MockRemoteClient {
    pub fn new(config: MockRemoteConfig) -> Self {
        MockRemoteClient { config }
    }

    fn collection_dir(&self, collection_id: &str) -> Result<PathBuf, IngestError> {
        let dir = resolve_relative(&self.config.base_dir, collection_id)
            .map_err(|_| IngestError::Unreachable(format!("invalid collection id {collection_id:?}")))?;
        if dir.join(MANIFEST_FILE).is_file() {
            Ok(dir)
        } else {
            Err(IngestError::Unreachable(format!("collection {collection_id:?} not found")))
        }
    }
}

impl RemoteClient for MockRemoteClient {
    fn fetch_manifest(&self, collection_id: &str) -> Result<String, IngestError> {
        let text = fs::read_to_string(self.collection_dir(collection_id)?.join(MANIFEST_FILE))?;
        if !self.config.emit_out_of_order {
            return Ok(text);
        }
        let mut value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| IngestError::RemoteSchemaMismatch(e.to_string()))?;
        if let Some(nfts) = value.get_mut("nfts").and_then(|v| v.as_array_mut()) {
            for nft in nfts {
                if let Some(acts) = nft.get_mut("activities").and_then(|v| v.as_array_mut()) {
                    acts.reverse();
                }
            }
        }
        Ok(value.to_string())
    }

    fn fetch_image(&self, collection_id: &str, image_ref: &str) -> Result<Vec<u8>, IngestError> {
        let dir = self.collection_dir(collection_id)?;
        Ok(DirImageSource::new(dir).image_bytes(image_ref)?)
    }
}

/// A snapshot fetched from a [`RemoteClient`] together with its image bytes.
#[derive(Debug, Clone)]
pub struct FetchedCollection {
    pub snapshot: CollectionSnapshot,
    pub warnings: Vec<Violation>,
    pub images: BTreeMap<String, Vec<u8>>,
}

impl ImageSource for FetchedCollection {
    fn image_bytes(&self, image_ref: &str) -> io::Result<Vec<u8>> {
        self.images.image_bytes(image_ref)
    }
}

/// Same contract as [`load_snapshot`], reading through a remote client.
pub fn fetch_remote(client: &dyn RemoteClient, collection_id: &str) -> Result<FetchedCollection, IngestError> {
    let text = client.fetch_manifest(collection_id)?;
    let snapshot = match parse_manifest(&text) {
        Ok(s) => s,
        Err(IngestError::MalformedManifest { message, .. }) => {
            return Err(IngestError::RemoteSchemaMismatch(message))
        }
        Err(e) => return Err(e),
    };
    let LoadReport { snapshot, warnings } = finalize_snapshot(snapshot)?;
    let mut images = BTreeMap::new();
    let mut broken = Vec::new();
    for nft in &snapshot.nfts {
        match client.fetch_image(collection_id, &nft.image_ref) {
            Ok(bytes) if decode_rgb(&bytes).is_ok() => {
                images.insert(nft.image_ref.clone(), bytes);
            }
            _ => broken.push(nft.token_id.clone()),
        }
    }
    if !broken.is_empty() {
        return Err(IngestError::BrokenImageRef { tokens: broken });
    }
    Ok(FetchedCollection {
        snapshot,
        warnings,
        images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn act(kind: ActivityKind, ts: i64, price: f64, from: &str, to: &str) -> Activity {
        Activity {
            kind,
            timestamp: ts,
            price_eth: Eth::from_eth(price),
            from_address: from.into(),
            to_address: to.into(),
            tx_id: format!("0x{ts:x}"),
        }
    }

    fn snapshot(nfts: Vec<NftRecord>) -> CollectionSnapshot {
        CollectionSnapshot {
            info: CollectionInfo {
                id: "c".into(),
                name: "C".into(),
                description: String::new(),
                official_url: String::new(),
                created_at: 0,
                snapshot_at: 1_000,
            },
            nfts,
        }
    }

    fn nft(id: &str, activities: Vec<Activity>) -> NftRecord {
        NftRecord {
            token_id: id.into(),
            image_ref: format!("images/{id}.png"),
            traits: TraitSet::new(),
            activities,
        }
    }

    #[test]
    fn valid_chain_has_no_violations() {
        let s = snapshot(vec![nft(
            "1",
            vec![
                act(ActivityKind::Mint, 10, 0.0, "", "a"),
                act(ActivityKind::Sale, 20, 1.0, "a", "b"),
                act(ActivityKind::Transfer, 30, 0.0, "b", "c"),
            ],
        )]);
        assert!(validate_snapshot(&s).is_empty());
    }

    #[test]
    fn activity_after_snapshot_is_flagged_once() {
        let s = snapshot(vec![nft("1", vec![act(ActivityKind::Mint, 2_000, 0.0, "", "a")])]);
        let v = validate_snapshot(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::ActivityAfterSnapshot);
        assert_eq!(v[0].token_id.as_deref(), Some("1"));
    }

    #[test]
    fn duplicate_token_ids_flagged_per_duplicate() {
        let s = snapshot(vec![nft("1", vec![]), nft("1", vec![]), nft("1", vec![])]);
        let v = validate_snapshot(&s);
        assert_eq!(v.iter().filter(|v| v.rule == Rule::DuplicateTokenId).count(), 2);
    }

    #[test]
    fn sale_without_mint_is_an_ordering_error() {
        let s = snapshot(vec![nft("1", vec![act(ActivityKind::Sale, 10, 1.0, "a", "b")])]);
        match finalize_snapshot(s) {
            Err(IngestError::ActivityOrderViolation(v)) => {
                assert!(v.iter().any(|v| v.rule == Rule::FirstActivityNotMint))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn broken_ownership_chain_detected() {
        let s = snapshot(vec![nft(
            "1",
            vec![
                act(ActivityKind::Mint, 10, 0.0, "", "a"),
                act(ActivityKind::Sale, 20, 1.0, "x", "b"),
            ],
        )]);
        let v = validate_snapshot(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::BrokenOwnershipChain);
    }

    #[test]
    fn priced_transfer_is_normalized_with_warning() {
        let s = snapshot(vec![nft(
            "1",
            vec![
                act(ActivityKind::Mint, 10, 0.0, "", "a"),
                act(ActivityKind::Transfer, 20, 2.0, "a", "b"),
            ],
        )]);
        let report = finalize_snapshot(s).unwrap();
        assert_eq!(report.warnings.len(), 1);
        assert_eq!(report.warnings[0].rule, Rule::PricedTransfer);
        assert!(report.snapshot.nfts[0].activities[1].price_eth.is_zero());
    }

    #[test]
    fn mint_price_defaults_to_zero() {
        let text = r#"{"collection":{"id":"c","name":"C","created_at":0,"snapshot_at":10},
            "nfts":[{"token_id":"1","image":"images/1.png","traits":[{"type":"Eyes","value":"Blue"}],
            "activities":[{"kind":"mint","timestamp":1,"to":"a"}]}]}"#;
        let s = parse_manifest(text).unwrap();
        assert_eq!(s.nfts[0].activities[0].price_eth, Eth::ZERO);
        assert_eq!(s.nfts[0].activities[0].from_address, "");
    }

    #[test]
    fn malformed_manifest_reports_position() {
        let err = parse_manifest("{\n  \"collection\": 3\n}").unwrap_err();
        match err {
            IngestError::MalformedManifest { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn holder_replay() {
        let n = nft(
            "1",
            vec![
                act(ActivityKind::Mint, 10, 0.0, "", "a"),
                act(ActivityKind::Sale, 20, 1.0, "a", "b"),
            ],
        );
        assert_eq!(n.holder_at(5), None);
        assert_eq!(n.holder_at(10), Some("a"));
        assert_eq!(n.holder_at(25), Some("b"));
        assert_eq!(n.current_holder(), Some("b"));
    }

    #[test]
    fn resolve_rejects_escapes() {
        let root = Path::new("/tmp/x");
        assert!(resolve_relative(root, "../etc/passwd").is_err());
        assert!(resolve_relative(root, "/etc/passwd").is_err());
        assert!(resolve_relative(root, "images/a.png").is_ok());
    }
}
