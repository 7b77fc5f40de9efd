use std::str::FromStr;
use std::sync::Arc;

use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::header::CONTENT_TYPE;
use axum::http::request::Parts;
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::NaiveDate;
use nftscope_core::indicators::{
    date_day, day_end, default_window, market_series, IndicatorContext, MarketDaily, WhalePolicy,
};
use nftscope_core::ingestion::ImageSource;
use nftscope_core::network::{build_transaction_network, TransactionNetwork};
use nftscope_core::rarity::RarityWeights;
use nftscope_core::storage::{CollectionView, Filter, FilterField, ListQuery, NftRow, SortKey};
use nftscope_core::{CollectionSnapshot, Eth, TraitSet};
use serde::Serialize;

use crate::catalog::Catalog;
use crate::error::ApiError;

pub const MAX_PAGE_SIZE: usize = 200;

#[derive(Debug, Clone)]
pub struct AppState {
    pub catalog: Arc<Catalog>,
    pub axes: Arc<[FilterField]>,
    pub whale_policy: WhalePolicy,
}

/// Raw query pairs, consumed key by key so leftovers can be rejected.
pub(crate) struct Params(Vec<(String, String)>);

impl<S: Send + Sync> FromRequestParts<S> for Params {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, ApiError> {
        let Query(pairs) = Query::<Vec<(String, String)>>::from_request_parts(parts, state).await?;
        Ok(Params(pairs))
    }
}

impl Params {
    fn take(&mut self, key: &str) -> Result<Option<String>, ApiError> {
        let mut found = None;
        let mut dup = false;
        self.0.retain(|(k, v)| {
            if k != key {
                return true;
            }
            dup |= found.is_some();
            found = Some(v.clone());
            false
        });
        if dup {
            return Err(ApiError::bad_request(format!("parameter {key:?} given more than once")));
        }
        Ok(found)
    }

    fn parse<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ApiError>
    where
        T::Err: std::fmt::Display,
    {
        self.take(key)?
            .map(|v| {
                v.trim()
                    .parse()
                    .map_err(|e| ApiError::bad_request(format!("invalid {key} {v:?}: {e}")))
            })
            .transpose()
    }

    fn finish(self) -> Result<(), ApiError> {
        match self.0.first() {
            Some((k, _)) => Err(ApiError::bad_request(format!("unknown parameter {k:?}"))),
            None => Ok(()),
        }
    }
}

fn image_url(collection_id: &str, image_ref: &str) -> String {
    format!("/images/{collection_id}/{image_ref}")
}

fn window(p: &mut Params, s: &CollectionSnapshot) -> Result<(NaiveDate, NaiveDate), ApiError> {
    let (from, to) = default_window(s);
    let from = p.parse("from")?.unwrap_or(from);
    let to = p.parse("to")?.unwrap_or(to);
    if from > to {
        return Err(ApiError::new(
            axum::http::StatusCode::BAD_REQUEST,
            "invalid_range",
            format!("from {from} is after to {to}"),
        ));
    }
    Ok((from, to))
}

#[derive(Debug, Serialize)]
pub struct CollectionSummary {
    pub id: String,
    pub name: String,
    pub description: String,
    pub official_url: String,
    pub image_url: Option<String>,
    pub nft_count: usize,
    pub holders: usize,
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub market_cap: Eth,
    pub volume: Eth,
    pub sales: usize,
    pub liquidity: f64,
    pub rarity_computed: bool,
}

pub fn summarize(view: &CollectionView, wp: WhalePolicy) -> CollectionSummary {
    let s = &view.snapshot;
    let (from, to) = default_window(s);
    let series = market_series(s, from, to, wp).expect("default window is ordered");
    let sales: usize = series.iter().map(|d| d.sales).sum();
    let liquidity = if s.is_empty() {
        0.0
    } else {
        sales as f64 * 100.0 / s.len() as f64
    };
    CollectionSummary {
        id: s.info.id.clone(),
        name: s.info.name.clone(),
        description: s.info.description.clone(),
        official_url: s.info.official_url.clone(),
        image_url: s.nfts.first().map(|n| image_url(s.id(), &n.image_ref)),
        nft_count: s.len(),
        holders: IndicatorContext::new(s, s.info.snapshot_at).holdings().len(),
        from,
        to,
        market_cap: series.last().map(|d| d.market_cap).unwrap_or(Eth::ZERO),
        volume: series.iter().map(|d| d.volume).sum(),
        sales,
        liquidity,
        rarity_computed: view.rarity.is_some(),
    }
}

pub(crate) async fn collections(State(st): State<AppState>, p: Params) -> Result<Json<Vec<CollectionSummary>>, ApiError> {
    p.finish()?;
    let mut out = Vec::new();
    for id in st.catalog.ids()? {
        out.push(summarize(&*st.catalog.get(&id)?, st.whale_policy));
    }
    Ok(Json(out))
}

pub(crate) async fn market(
    State(st): State<AppState>,
    Path(id): Path<String>,
    mut p: Params,
) -> Result<Json<Vec<MarketDaily>>, ApiError> {
    let view = st.catalog.get(&id)?;
    let (from, to) = window(&mut p, &view.snapshot)?;
    p.finish()?;
    Ok(Json(market_series(&view.snapshot, from, to, st.whale_policy)?))
}

#[derive(Debug, Serialize)]
pub struct NftRowOut {
    #[serde(flatten)]
    pub row: NftRow,
    pub image_url: String,
}

#[derive(Debug, Serialize)]
pub struct NftPage {
    pub collection_id: String,
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
    pub w_trait: f64,
    pub rows: Vec<NftRowOut>,
}

const FILTER_FIELDS: [FilterField; 11] = [
    FilterField::TraitRarity,
    FilterField::ImageRarity,
    FilterField::WeightedRarity,
    FilterField::PastOwners,
    FilterField::CurrentHoldTime,
    FilterField::LongestHoldTime,
    FilterField::LastPrice,
    FilterField::PriceRank,
    FilterField::TraitRarityRank,
    FilterField::ImageRarityRank,
    FilterField::SellersPnl,
];

fn field_name(f: FilterField) -> String {
    serde_json::to_value(f)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ApiError> {
    match v {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(ApiError::bad_request(format!("invalid {key} {v:?}: expected true or false"))),
    }
}

/// Parses the `/nfts` query string into a [`ListQuery`].
fn list_query(p: &mut Params) -> Result<ListQuery, ApiError> {
    let mut q = ListQuery::default();
    if let Some(s) = p.take("sort")? {
        q.sort_key = SortKey::from_str(&s).map_err(ApiError::bad_request)?;
    }
    if let Some(d) = p.take("desc")? {
        q.descending = parse_bool("desc", &d)?;
    }
    if let Some(w) = p.parse::<f64>("w_trait")? {
        q.weights = RarityWeights::new(w).map_err(|e| ApiError::bad_request(e.to_string()))?;
    }
    for f in FILTER_FIELDS {
        let name = field_name(f);
        let min = p.parse::<f64>(&format!("filter.{name}.min"))?;
        let max = p.parse::<f64>(&format!("filter.{name}.max"))?;
        if min.is_some() || max.is_some() {
            q.filters.push(Filter {
                field: f,
                min: min.unwrap_or(f64::NEG_INFINITY),
                max: max.unwrap_or(f64::INFINITY),
            });
        }
    }
    if let Some(page) = p.parse("page")? {
        q.page = page;
    }
    if let Some(size) = p.parse::<usize>("page_size")? {
        q.page_size = size.min(MAX_PAGE_SIZE);
    }
    Ok(q)
}

pub(crate) async fn nfts(State(st): State<AppState>, Path(id): Path<String>, mut p: Params) -> Result<Json<NftPage>, ApiError> {
    let q = list_query(&mut p)?;
    p.finish()?;
    let view = st.catalog.get(&id)?;
    let page = view.query(&q)?;
    Ok(Json(NftPage {
        rows: page
            .rows
            .into_iter()
            .map(|row| NftRowOut {
                image_url: image_url(&page.collection_id, &row.image),
                row,
            })
            .collect(),
        collection_id: page.collection_id,
        total: page.total,
        page: page.page,
        page_size: page.page_size,
        w_trait: q.weights.w_trait(),
    }))
}

#[derive(Debug, Serialize)]
pub struct Axis {
    pub name: String,
    pub unit: &'static str,
    /// Over the returned rows; `None` when no row has a value.
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct MatrixRow {
    pub token_id: String,
    /// Aligned with `axes`; `None` for a missing value.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Serialize)]
pub struct IndicatorMatrix {
    pub collection_id: String,
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub as_of: i64,
    pub axes: Vec<Axis>,
    pub rows: Vec<MatrixRow>,
}

pub fn axis_unit(f: FilterField) -> &'static str {
    match f {
        FilterField::TraitRarity | FilterField::ImageRarity | FilterField::WeightedRarity => "score",
        FilterField::PastOwners => "count",
        FilterField::CurrentHoldTime | FilterField::LongestHoldTime => "seconds",
        FilterField::LastPrice | FilterField::SellersPnl => "eth",
        FilterField::PriceRank | FilterField::TraitRarityRank | FilterField::ImageRarityRank => "rank",
    }
}

/// One row per NFT minted by the end of `to` (or the snapshot time, if
/// earlier), with indicators replayed up to that moment.
pub fn indicator_matrix(
    view: &CollectionView,
    axes: &[FilterField],
    from: NaiveDate,
    to: NaiveDate,
) -> Result<IndicatorMatrix, ApiError> {
    let s = &view.snapshot;
    let as_of = day_end(date_day(to)).min(s.info.snapshot_at);
    let rows: Vec<MatrixRow> = view
        .rows_at(RarityWeights::default(), as_of)?
        .into_iter()
        .zip(&s.nfts)
        .filter(|(_, nft)| nft.activities.first().map_or(true, |a| a.timestamp <= as_of))
        .map(|(row, _)| MatrixRow {
            values: axes
                .iter()
                .map(|&a| Some(row.field(a)).filter(|v| v.is_finite()))
                .collect(),
            token_id: row.token_id,
        })
        .collect();
    let axes = axes
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let vals = rows.iter().filter_map(|r| r.values[k]);
            Axis {
                name: field_name(a),
                unit: axis_unit(a),
                min: vals.clone().reduce(f64::min),
                max: vals.reduce(f64::max),
            }
        })
        .collect();
    Ok(IndicatorMatrix {
        collection_id: s.id().into(),
        from,
        to,
        as_of,
        axes,
        rows,
    })
}

pub(crate) async fn matrix(
    State(st): State<AppState>,
    Path(id): Path<String>,
    mut p: Params,
) -> Result<Json<IndicatorMatrix>, ApiError> {
    let view = st.catalog.get(&id)?;
    let (from, to) = window(&mut p, &view.snapshot)?;
    p.finish()?;
    Ok(Json(indicator_matrix(&view, &st.axes, from, to)?))
}

#[derive(Debug, Serialize)]
pub struct FocusNft {
    pub token_id: String,
    pub image_url: String,
    pub traits: TraitSet,
}

#[derive(Debug, Serialize)]
pub struct ActivityNetwork {
    #[serde(flatten)]
    pub network: TransactionNetwork,
    pub focus: FocusNft,
}

pub(crate) async fn activity_network(
    State(st): State<AppState>,
    Path((id, token)): Path<(String, String)>,
    mut p: Params,
) -> Result<Json<ActivityNetwork>, ApiError> {
    let as_of: Option<i64> = p.parse("as_of")?;
    p.finish()?;
    let view = st.catalog.get(&id)?;
    let s = &view.snapshot;
    let nft = s
        .nft(&token)
        .ok_or_else(|| ApiError::not_found("unknown_token", format!("unknown token {token:?}")))?;
    let network = build_transaction_network(&token, s, as_of.unwrap_or(s.info.snapshot_at), st.whale_policy)?;
    Ok(Json(ActivityNetwork {
        network,
        focus: FocusNft {
            token_id: nft.token_id.clone(),
            image_url: image_url(s.id(), &nft.image_ref),
            traits: nft.traits.clone(),
        },
    }))
}

fn content_type(path: &str) -> &'static str {
    let ext = path.rsplit_once('.').map(|(_, e)| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("svg") => "image/svg+xml",
        _ => "application/octet-stream",
    }
}

/// Serves only files that some NFT of the collection references.
pub(crate) async fn image(
    State(st): State<AppState>,
    Path((id, path)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let view = st.catalog.get(&id)?;
    if !view.snapshot.nfts.iter().any(|n| n.image_ref == path) {
        return Err(ApiError::not_found("unknown_image", format!("unknown image {path:?}")));
    }
    let bytes = st
        .catalog
        .store()
        .images(&id)?
        .image_bytes(&path)
        .map_err(|e| ApiError::from(nftscope_core::storage::StorageError::Io(e)))?;
    Ok(([(CONTENT_TYPE, content_type(&path))], bytes).into_response())
}

pub(crate) async fn not_found() -> ApiError {
    ApiError::not_found("not_found", "no such endpoint")
}
