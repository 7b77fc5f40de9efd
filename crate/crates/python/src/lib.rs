//! Python bindings. Results cross the boundary as plain dicts and lists.

use std::path::PathBuf;

use chrono::NaiveDate;
use nftscope_core::fixtures::{generate, Scenario};
use nftscope_core::indicators::{
    default_window, market_series, trader_indicators, IndicatorContext, IndicatorError, WhalePolicy,
};
use nftscope_core::ingestion::{load_snapshot_report, DirImageSource, IngestError, Trait};
use nftscope_core::network::build_transaction_network;
use nftscope_core::rarity::{
    compute_collection_rarity, jaccard_similarity as jaccard, scores_from_pairs, trait_rarities, ExtractionStats,
    RarityConfig, RarityError, RarityRun, RarityWeights,
};
use nftscope_core::storage::{
    ranking, validate_collection_id, Filter, FilterField, ListQuery, SortKey, StorageError, Store as CoreStore,
};
use nftscope_core::{CollectionSnapshot, TraitSet};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyKeyError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(nftscope, NftscopeError, PyException);

fn other(e: impl std::fmt::Display) -> PyErr {
    NftscopeError::new_err(e.to_string())
}

fn storage_err(e: StorageError) -> PyErr {
    match e {
        StorageError::UnknownCollection(_) | StorageError::RarityNotComputed(_) => PyKeyError::new_err(e.to_string()),
        StorageError::InvalidId(_) | StorageError::InvalidQuery(_) => PyValueError::new_err(e.to_string()),
        e => other(e),
    }
}

fn indicator_err(e: IndicatorError) -> PyErr {
    match e {
        IndicatorError::UnknownToken(_) => PyKeyError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn rarity_err(e: RarityError) -> PyErr {
    match e {
        RarityError::UnknownToken(_) => PyKeyError::new_err(e.to_string()),
        RarityError::InvalidWeight(_) | RarityError::InvalidMatchParams(_) => PyValueError::new_err(e.to_string()),
        e => other(e),
    }
}

fn ingest_err(e: IngestError) -> PyErr {
    other(e)
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(other)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn whale(min: usize) -> PyResult<WhalePolicy> {
    WhalePolicy::new(min).map_err(indicator_err)
}

fn weights(w_trait: f64) -> PyResult<RarityWeights> {
    RarityWeights::new(w_trait).map_err(rarity_err)
}

fn date(s: &str) -> PyResult<NaiveDate> {
    s.parse().map_err(|_| PyValueError::new_err(format!("invalid date {s:?}, expected YYYY-MM-DD")))
}

fn parse<T: std::str::FromStr<Err = String>>(s: &str) -> PyResult<T> {
    s.parse().map_err(PyValueError::new_err)
}

/// An immutable collection snapshot.
#[pyclass(frozen, module = "nftscope")]
struct Collection {
    inner: CollectionSnapshot,
}

#[pymethods]
impl Collection {
    #[getter]
    fn id(&self) -> &str {
        self.inner.id()
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.info.name
    }

    #[getter]
    fn snapshot_at(&self) -> i64 {
        self.inner.info.snapshot_at
    }

    #[getter]
    fn token_ids(&self) -> Vec<String> {
        self.inner.nfts.iter().map(|n| n.token_id.clone()).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Collection(id={:?}, nfts={})", self.inner.id(), self.inner.len())
    }

    /// Canonical manifest JSON.
    fn to_json(&self) -> String {
        self.inner.to_manifest_json()
    }

    /// `(token_id, trait_rarity)` pairs in manifest order.
    fn trait_rarities(&self) -> Vec<(String, f64)> {
        let ids = self.inner.nfts.iter().map(|n| n.token_id.clone());
        ids.zip(trait_rarities(&self.inner)).collect()
    }

    /// Daily market records; dates are `YYYY-MM-DD` and default to the activity window.
    #[pyo3(signature = (start=None, end=None, whale_min=10))]
    fn market_series<'py>(
        &self,
        py: Python<'py>,
        start: Option<&str>,
        end: Option<&str>,
        whale_min: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        let (d_from, d_to) = default_window(&self.inner);
        let from = start.map(date).transpose()?.unwrap_or(d_from);
        let to = end.map(date).transpose()?.unwrap_or(d_to);
        let series = market_series(&self.inner, from, to, whale(whale_min)?).map_err(indicator_err)?;
        to_py(py, &series)
    }

    /// Per-NFT indicators at `as_of` (unix seconds, default the snapshot time).
    #[pyo3(signature = (as_of=None))]
    fn nft_indicators<'py>(&self, py: Python<'py>, as_of: Option<i64>) -> PyResult<Bound<'py, PyAny>> {
        let ctx = IndicatorContext::new(&self.inner, as_of.unwrap_or(self.inner.info.snapshot_at));
        to_py(py, &ctx.nft_indicators_all(None))
    }

    #[pyo3(signature = (address, as_of=None, whale_min=10))]
    fn trader_indicators<'py>(
        &self,
        py: Python<'py>,
        address: &str,
        as_of: Option<i64>,
        whale_min: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        let as_of = as_of.unwrap_or(self.inner.info.snapshot_at);
        to_py(py, &trader_indicators(address, &self.inner, as_of, whale(whale_min)?))
    }

    /// Transaction network centred on one NFT.
    #[pyo3(signature = (token_id, as_of=None, whale_min=10))]
    fn network<'py>(
        &self,
        py: Python<'py>,
        token_id: &str,
        as_of: Option<i64>,
        whale_min: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        let as_of = as_of.unwrap_or(self.inner.info.snapshot_at);
        let net = build_transaction_network(token_id, &self.inner, as_of, whale(whale_min)?).map_err(indicator_err)?;
        to_py(py, &net)
    }
}

/// Loads and validates a snapshot directory without storing it.
#[pyfunction]
fn load_collection(path: PathBuf) -> PyResult<Collection> {
    let report = load_snapshot_report(&path).map_err(ingest_err)?;
    Ok(Collection { inner: report.snapshot })
}

/// Generates a synthetic collection. With `out`, also writes manifest and images there.
#[pyfunction]
#[pyo3(signature = (scenario, seed=7, out=None))]
fn generate_fixture(scenario: &str, seed: u64, out: Option<PathBuf>) -> PyResult<Collection> {
    let f = generate(parse::<Scenario>(scenario)?, seed);
    if let Some(dir) = out {
        f.write(&dir).map_err(ingest_err)?;
    }
    Ok(Collection { inner: f.snapshot })
}

fn trait_set(pairs: Vec<(String, String)>) -> TraitSet {
    let mut set = TraitSet::new();
    for (t, v) in pairs {
        set.insert(Trait::new(t, v));
    }
    set
}

/// Jaccard similarity of two `(type, value)` trait lists.
#[pyfunction]
fn jaccard_similarity(a: Vec<(String, String)>, b: Vec<(String, String)>) -> f64 {
    jaccard(&trait_set(a), &trait_set(b))
}

#[derive(Serialize)]
struct RarityStats {
    collection_id: String,
    reused_pairs: bool,
    extracted: usize,
    cache_hits: usize,
}

/// A data directory.
#[pyclass(frozen, module = "nftscope")]
struct Store {
    inner: CoreStore,
}

#[pymethods]
impl Store {
    #[new]
    fn new(path: PathBuf) -> PyResult<Self> {
        Ok(Store {
            inner: CoreStore::open(path).map_err(storage_err)?,
        })
    }

    #[getter]
    fn root(&self) -> PathBuf {
        self.inner.root().to_path_buf()
    }

    fn collections(&self) -> PyResult<Vec<String>> {
        self.inner.list_collections().map_err(storage_err)
    }

    /// Validates and stores a snapshot directory; returns the collection id.
    #[pyo3(signature = (path, collection_id=None))]
    fn ingest(&self, path: PathBuf, collection_id: Option<String>) -> PyResult<String> {
        let mut report = load_snapshot_report(&path).map_err(ingest_err)?;
        if let Some(id) = collection_id {
            validate_collection_id(&id).map_err(storage_err)?;
            report.snapshot.info.id = id;
        }
        self.inner
            .put_snapshot(&report.snapshot, &DirImageSource::new(&path))
            .map_err(storage_err)
    }

    fn snapshot(&self, collection_id: &str) -> PyResult<Collection> {
        let inner = self.inner.get_snapshot(collection_id).map_err(storage_err)?;
        Ok(Collection { inner })
    }

    /// Computes and persists rarity, reusing cached pair differences when present.
    #[pyo3(signature = (collection_id, jobs=0))]
    fn compute_rarity<'py>(&self, py: Python<'py>, collection_id: &str, jobs: usize) -> PyResult<Bound<'py, PyAny>> {
        let id = collection_id.to_string();
        let stats = py.detach(|| -> PyResult<RarityStats> {
            let snapshot = self.inner.get_snapshot(&id).map_err(storage_err)?;
            let cfg = RarityConfig {
                jobs,
                ..RarityConfig::default()
            };
            let cached = self.inner.get_pair_diffs(&id, &cfg.params_hash()).map_err(storage_err)?;
            let reused_pairs = cached.is_some();
            let run = match cached {
                Some(pairs) => RarityRun {
                    scores: scores_from_pairs(&snapshot, &pairs),
                    pairs,
                    stats: ExtractionStats::default(),
                },
                None => {
                    let cache = self.inner.feature_cache(&id).map_err(storage_err)?;
                    let images = self.inner.images(&id).map_err(storage_err)?;
                    compute_collection_rarity(&snapshot, &images, &cfg, Some(&cache)).map_err(rarity_err)?
                }
            };
            self.inner.put_rarity(&id, &cfg, &run).map_err(storage_err)?;
            Ok(RarityStats {
                collection_id: id.clone(),
                reused_pairs,
                extracted: run.stats.extracted,
                cache_hits: run.stats.cache_hits,
            })
        })?;
        to_py(py, &stats)
    }

    /// Stored rarity scores in manifest order.
    fn rarity<'py>(&self, py: Python<'py>, collection_id: &str) -> PyResult<Bound<'py, PyAny>> {
        let rec = self.inner.get_rarity(collection_id).map_err(storage_err)?;
        to_py(py, &rec.scores)
    }

    /// Every NFT row, most rare first.
    #[pyo3(signature = (collection_id, w_trait=0.5))]
    fn ranking<'py>(&self, py: Python<'py>, collection_id: &str, w_trait: f64) -> PyResult<Bound<'py, PyAny>> {
        let view = self.inner.view(collection_id).map_err(storage_err)?;
        to_py(py, &ranking(&view, weights(w_trait)?).map_err(storage_err)?)
    }

    /// One page of filtered, sorted rows. `filters` maps a field name to `(min, max)`.
    #[pyo3(signature = (
        collection_id,
        sort="weighted_rarity",
        descending=true,
        w_trait=0.5,
        filters=None,
        page=0,
        page_size=20,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn query<'py>(
        &self,
        py: Python<'py>,
        collection_id: &str,
        sort: &str,
        descending: bool,
        w_trait: f64,
        filters: Option<Vec<(String, (f64, f64))>>,
        page: usize,
        page_size: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        let filters = filters
            .unwrap_or_default()
            .into_iter()
            .map(|(name, (min, max))| {
                Ok(Filter {
                    field: parse::<FilterField>(&name)?,
                    min,
                    max,
                })
            })
            .collect::<PyResult<Vec<_>>>()?;
        let q = ListQuery {
            sort_key: parse::<SortKey>(sort)?,
            descending,
            weights: weights(w_trait)?,
            filters,
            page,
            page_size,
        };
        let view = self.inner.view(collection_id).map_err(storage_err)?;
        to_py(py, &view.query(&q).map_err(storage_err)?)
    }
}

#[pymodule]
fn nftscope(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NftscopeError", m.py().get_type::<NftscopeError>())?;
    m.add_class::<Collection>()?;
    m.add_class::<Store>()?;
    m.add_function(wrap_pyfunction!(load_collection, m)?)?;
    m.add_function(wrap_pyfunction!(generate_fixture, m)?)?;
    m.add_function(wrap_pyfunction!(jaccard_similarity, m)?)?;
    Ok(())
}
