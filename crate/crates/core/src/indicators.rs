//! Market time series and per-NFT / per-trader indicators.
//!
//! Every value is a replay of the activity logs up to a cut-off timestamp.
//! Prices come from sales only: an NFT is valued at its last sale, falling
//! back to the collection floor, falling back to 0.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eth::Eth;
use crate::ingestion::{Activity, ActivityKind, CollectionSnapshot, NftRecord};
use crate::rarity::{rank_order, RarityScores};

pub const DAY_SECONDS: i64 = 86_400;

#[derive(Debug, Error, PartialEq)]
pub enum IndicatorError {
    #[error("empty range: {from} is after {to}")]
    EmptyRange { from: NaiveDate, to: NaiveDate },
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("whale threshold must be at least 1")]
    InvalidPolicy,
    #[error("activity is not a sale of this collection")]
    NotASale,
}

/// Index of the UTC day containing `ts`.
pub fn day_index(ts: i64) -> i64 {
    ts.div_euclid(DAY_SECONDS)
}

pub fn day_date(day: i64) -> NaiveDate {
    DateTime::from_timestamp(day * DAY_SECONDS, 0)
        .expect("timestamp in chrono range")
        .date_naive()
}

pub fn date_day(date: NaiveDate) -> i64 {
    day_index(date.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp())
}

/// Last second of a UTC day.
pub fn day_end(day: i64) -> i64 {
    (day + 1) * DAY_SECONDS - 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WhalePolicy {
    pub min_holdings: usize,
}

impl Default for WhalePolicy {
    fn default() -> Self {
        WhalePolicy { min_holdings: 10 }
    }
}

impl WhalePolicy {
    pub fn new(min_holdings: usize) -> Result<Self, IndicatorError> {
        if min_holdings == 0 {
            return Err(IndicatorError::InvalidPolicy);
        }
        Ok(WhalePolicy { min_holdings })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SaleClass {
    Whale,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SalePoint {
    pub timestamp: i64,
    pub price: Eth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketDaily {
    pub date: NaiveDate,
    pub market_cap: Eth,
    pub average_price: f64,
    pub floor_price: Eth,
    pub volume: Eth,
    /// Percent of the collection sold that day.
    pub liquidity: f64,
    pub sales: usize,
    pub transfers: usize,
    pub whale_sales: Vec<SalePoint>,
    pub normal_sales: Vec<SalePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NftIndicators {
    pub token_id: String,
    pub past_owners: usize,
    pub current_hold_time: i64,
    pub longest_hold_time: i64,
    pub last_price: Eth,
    pub price_rank: usize,
    pub trait_rarity_rank: Option<usize>,
    pub image_rarity_rank: Option<usize>,
    pub sellers_pnl: Eth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraderIndicators {
    pub address: String,
    pub holding_value: Eth,
    pub pnl: Eth,
    pub realized_pnl: Eth,
    pub unrealized_pnl: Eth,
    pub activity_count: usize,
    pub holdings: usize,
    pub is_whale: bool,
}

/// Position of an activity: `(nft index, activity index)`.
pub type ActivityRef = (usize, usize);

/// All activities up to `as_of`, ordered by `(timestamp, nft, index)`.
pub fn global_order(collection: &CollectionSnapshot, as_of: i64) -> Vec<ActivityRef> {
    let mut refs: Vec<(i64, usize, usize)> = collection
        .nfts
        .iter()
        .enumerate()
        .flat_map(|(n, nft)| {
            nft.activities_until(as_of)
                .iter()
                .enumerate()
                .map(move |(i, a)| (a.timestamp, n, i))
        })
        .collect();
    refs.sort_unstable();
    refs.into_iter().map(|(_, n, i)| (n, i)).collect()
}

/// Sale prices indexed for floor and last-sale lookups.
#[derive(Debug, Clone)]
pub struct PriceBook {
    /// `(timestamp, price)` in global order.
    sales: Vec<(i64, Eth)>,
    /// Per NFT, `(timestamp, price)` in log order.
    per_nft: Vec<Vec<(i64, Eth)>>,
}

impl PriceBook {
    pub fn new(collection: &CollectionSnapshot) -> Self {
        let mut sales = Vec::new();
        let mut per_nft = Vec::with_capacity(collection.len());
        for nft in &collection.nfts {
            let own: Vec<(i64, Eth)> = nft
                .activities
                .iter()
                .filter(|a| a.kind == ActivityKind::Sale)
                .map(|a| (a.timestamp, a.price_eth))
                .collect();
            sales.extend_from_slice(&own);
            per_nft.push(own);
        }
        sales.sort_by_key(|&(ts, _)| ts);
        PriceBook { sales, per_nft }
    }

    /// Lowest sale price on the most recent day with sales at or before `ts`.
    pub fn floor_at(&self, ts: i64) -> Eth {
        let end = self.sales.partition_point(|&(t, _)| t <= ts);
        let Some(&(last_ts, _)) = end.checked_sub(1).map(|i| &self.sales[i]) else {
            return Eth::ZERO;
        };
        let day = day_index(last_ts);
        self.sales[..end]
            .iter()
            .rev()
            .take_while(|&&(t, _)| day_index(t) == day)
            .map(|&(_, p)| p)
            .min()
            .unwrap_or(Eth::ZERO)
    }

    pub fn last_sale(&self, nft: usize, ts: i64) -> Option<Eth> {
        let sales = &self.per_nft[nft];
        let end = sales.partition_point(|&(t, _)| t <= ts);
        end.checked_sub(1).map(|i| sales[i].1)
    }

    pub fn valuation(&self, nft: usize, ts: i64) -> Eth {
        self.last_sale(nft, ts).unwrap_or_else(|| self.floor_at(ts))
    }
}

/// Seller holding counts just before each sale, replayed over `order`.
fn replay_sale_classes(
    collection: &CollectionSnapshot,
    order: &[ActivityRef],
    wp: WhalePolicy,
) -> HashMap<ActivityRef, SaleClass> {
    let mut holdings: HashMap<&str, usize> = HashMap::new();
    let mut classes = HashMap::new();
    for &(n, i) in order {
        let a = &collection.nfts[n].activities[i];
        if a.kind == ActivityKind::Sale {
            let held = holdings.get(a.from_address.as_str()).copied().unwrap_or(0);
            let class = if held >= wp.min_holdings {
                SaleClass::Whale
            } else {
                SaleClass::Normal
            };
            classes.insert((n, i), class);
        }
        if a.kind != ActivityKind::Mint {
            if let Some(c) = holdings.get_mut(a.from_address.as_str()) {
                *c = c.saturating_sub(1);
            }
        }
        *holdings.entry(a.to_address.as_str()).or_default() += 1;
    }
    classes
}

/// Whale iff the seller held at least `wp.min_holdings` NFTs of the
/// collection just before the sale.
pub fn classify_sale(sale: &Activity, collection: &CollectionSnapshot, wp: WhalePolicy) -> Result<SaleClass, IndicatorError> {
    if sale.kind != ActivityKind::Sale {
        return Err(IndicatorError::NotASale);
    }
    let at = collection
        .nfts
        .iter()
        .enumerate()
        .find_map(|(n, nft)| nft.activities.iter().position(|a| a == sale).map(|i| (n, i)))
        .ok_or(IndicatorError::NotASale)?;
    let order = global_order(collection, sale.timestamp);
    Ok(replay_sale_classes(collection, &order, wp)[&at])
}

/// First activity day through snapshot day.
pub fn default_window(s: &CollectionSnapshot) -> (NaiveDate, NaiveDate) {
    let last = day_index(s.info.snapshot_at);
    let first = s
        .nfts
        .iter()
        .filter_map(|n| n.activities.first())
        .map(|a| day_index(a.timestamp))
        .min()
        .unwrap_or(last)
        .min(last);
    (day_date(first), day_date(last))
}

/// One record per UTC day in `[from, to]`.
pub fn market_series(
    collection: &CollectionSnapshot,
    from: NaiveDate,
    to: NaiveDate,
    wp: WhalePolicy,
) -> Result<Vec<MarketDaily>, IndicatorError> {
    if from > to {
        return Err(IndicatorError::EmptyRange { from, to });
    }
    let (first, last) = (date_day(from), date_day(to));
    let book = PriceBook::new(collection);
    let order = global_order(collection, i64::MAX);
    let classes = replay_sale_classes(collection, &order, wp);

    let mut by_day: BTreeMap<i64, Vec<ActivityRef>> = BTreeMap::new();
    for &(n, i) in &order {
        let day = day_index(collection.nfts[n].activities[i].timestamp);
        if (first..=last).contains(&day) {
            by_day.entry(day).or_default().push((n, i));
        }
    }

    let m = collection.len();
    let mut out = Vec::with_capacity((last - first + 1) as usize);
    for day in first..=last {
        let end = day_end(day);
        let mut rec = MarketDaily {
            date: day_date(day),
            market_cap: (0..m).map(|n| book.valuation(n, end)).sum(),
            average_price: 0.0,
            floor_price: book.floor_at(end),
            volume: Eth::ZERO,
            liquidity: 0.0,
            sales: 0,
            transfers: 0,
            whale_sales: Vec::new(),
            normal_sales: Vec::new(),
        };
        for &(n, i) in by_day.get(&day).map(Vec::as_slice).unwrap_or_default() {
            let a = &collection.nfts[n].activities[i];
            match a.kind {
                ActivityKind::Sale => {
                    rec.sales += 1;
                    rec.volume += a.price_eth;
                    let point = SalePoint {
                        timestamp: a.timestamp,
                        price: a.price_eth,
                    };
                    match classes[&(n, i)] {
                        SaleClass::Whale => rec.whale_sales.push(point),
                        SaleClass::Normal => rec.normal_sales.push(point),
                    }
                }
                ActivityKind::Transfer => rec.transfers += 1,
                ActivityKind::Mint => {}
            }
        }
        if rec.sales > 0 {
            rec.average_price = rec.volume.as_eth() / rec.sales as f64;
        }
        if m > 0 {
            rec.liquidity = rec.sales as f64 * 100.0 / m as f64;
        }
        out.push(rec);
    }
    Ok(out)
}

/// One holding interval of an NFT.
#[derive(Debug, Clone, PartialEq)]
pub struct Leg<'a> {
    pub holder: &'a str,
    pub acquired_at: i64,
    /// Mint price, purchase price, or 0 for a transfer-in.
    pub cost: Eth,
    pub released_at: Option<i64>,
    /// Set when the leg ended in a sale.
    pub sale_price: Option<Eth>,
}

/// Ownership intervals of `nft` up to `as_of`; the last one is open.
pub fn legs(nft: &NftRecord, as_of: i64) -> Vec<Leg<'_>> {
    let mut out: Vec<Leg> = Vec::new();
    for a in nft.activities_until(as_of) {
        if a.kind != ActivityKind::Mint {
            if let Some(prev) = out.last_mut() {
                prev.released_at = Some(a.timestamp);
                prev.sale_price = (a.kind == ActivityKind::Sale).then_some(a.price_eth);
            }
        }
        out.push(Leg {
            holder: &a.to_address,
            acquired_at: a.timestamp,
            cost: if a.kind == ActivityKind::Transfer {
                Eth::ZERO
            } else {
                a.price_eth
            },
            released_at: None,
            sale_price: None,
        });
    }
    out
}

/// Indicator computations over one snapshot at a fixed cut-off.
#[derive(Debug, Clone)]
pub struct IndicatorContext<'a> {
    collection: &'a CollectionSnapshot,
    as_of: i64,
    book: PriceBook,
}

impl<'a> IndicatorContext<'a> {
    pub fn new(collection: &'a CollectionSnapshot, as_of: i64) -> Self {
        IndicatorContext {
            collection,
            as_of,
            book: PriceBook::new(collection),
        }
    }

    pub fn as_of(&self) -> i64 {
        self.as_of
    }

    pub fn valuation(&self, nft: usize) -> Eth {
        self.book.valuation(nft, self.as_of)
    }

    pub fn last_price(&self, nft: usize) -> Option<Eth> {
        self.book.last_sale(nft, self.as_of)
    }

    /// Indicators for every NFT, in collection order.
    pub fn nft_indicators_all(&self, rarity: Option<&[RarityScores]>) -> Vec<NftIndicators> {
        let nfts = &self.collection.nfts;
        let last: Vec<Option<Eth>> = (0..nfts.len()).map(|n| self.last_price(n)).collect();

        // Sold NFTs by descending price, then unsold ones; ties by token id.
        let mut order: Vec<usize> = (0..nfts.len()).collect();
        order.sort_by(|&a, &b| {
            last[b]
                .is_some()
                .cmp(&last[a].is_some())
                .then(last[b].cmp(&last[a]))
                .then_with(|| nfts[a].token_id.cmp(&nfts[b].token_id))
        });
        let mut price_rank = vec![0; nfts.len()];
        for (r, &n) in order.iter().enumerate() {
            price_rank[n] = r + 1;
        }

        let trait_ranks = rarity.map(|s| rarity_ranks(s, |x| x.trait_rarity));
        let image_ranks = rarity.map(|s| rarity_ranks(s, |x| x.image_rarity));

        nfts.iter()
            .enumerate()
            .map(|(n, nft)| {
                let legs = legs(nft, self.as_of);
                let past_owners = match legs.split_last() {
                    Some((_, earlier)) => earlier.iter().map(|l| l.holder).collect::<BTreeSet<_>>().len(),
                    None => 0,
                };
                let held = |l: &Leg| l.released_at.unwrap_or(self.as_of) - l.acquired_at;
                let token = nft.token_id.as_str();
                NftIndicators {
                    token_id: nft.token_id.clone(),
                    past_owners,
                    current_hold_time: legs.last().map(held).unwrap_or(0),
                    longest_hold_time: legs.iter().map(held).max().unwrap_or(0),
                    last_price: last[n].unwrap_or(Eth::ZERO),
                    price_rank: price_rank[n],
                    trait_rarity_rank: trait_ranks.as_ref().and_then(|r| r.get(token).copied()),
                    image_rarity_rank: image_ranks.as_ref().and_then(|r| r.get(token).copied()),
                    sellers_pnl: legs
                        .iter()
                        .filter_map(|l| l.sale_price.map(|p| p - l.cost))
                        .sum(),
                }
            })
            .collect()
    }

    pub fn nft_indicators(&self, token_id: &str, rarity: Option<&[RarityScores]>) -> Result<NftIndicators, IndicatorError> {
        let n = self
            .collection
            .nft_index(token_id)
            .ok_or_else(|| IndicatorError::UnknownToken(token_id.into()))?;
        Ok(self.nft_indicators_all(rarity).swap_remove(n))
    }

    pub fn trader_indicators(&self, address: &str, wp: WhalePolicy) -> TraderIndicators {
        let mut t = TraderIndicators {
            address: address.into(),
            holding_value: Eth::ZERO,
            pnl: Eth::ZERO,
            realized_pnl: Eth::ZERO,
            unrealized_pnl: Eth::ZERO,
            activity_count: 0,
            holdings: 0,
            is_whale: false,
        };
        for (n, nft) in self.collection.nfts.iter().enumerate() {
            t.activity_count += nft
                .activities_until(self.as_of)
                .iter()
                .filter(|a| a.from_address == address || a.to_address == address)
                .count();
            for leg in legs(nft, self.as_of).iter().filter(|l| l.holder == address) {
                match (leg.released_at, leg.sale_price) {
                    (Some(_), Some(p)) => t.realized_pnl += p - leg.cost,
                    (Some(_), None) => {}
                    (None, _) => {
                        let v = self.valuation(n);
                        t.holdings += 1;
                        t.holding_value += v;
                        t.unrealized_pnl += v - leg.cost;
                    }
                }
            }
        }
        t.pnl = t.realized_pnl + t.unrealized_pnl;
        t.is_whale = t.holdings >= wp.min_holdings;
        t
    }

    /// Current holder of each NFT minted by `as_of`, with holding counts.
    pub fn holdings(&self) -> BTreeMap<&'a str, usize> {
        let mut out = BTreeMap::new();
        for nft in &self.collection.nfts {
            if let Some(h) = nft.holder_at(self.as_of) {
                *out.entry(h).or_default() += 1;
            }
        }
        out
    }
}

/// 1-based rank by descending score, ties by token id.
fn rarity_ranks(scores: &[RarityScores], key: impl Fn(&RarityScores) -> f64) -> HashMap<&str, usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        rank_order(
            (&scores[a].token_id, key(&scores[a])),
            (&scores[b].token_id, key(&scores[b])),
        )
    });
    idx.into_iter()
        .enumerate()
        .map(|(r, i)| (scores[i].token_id.as_str(), r + 1))
        .collect()
}

pub fn nft_indicators(
    token_id: &str,
    collection: &CollectionSnapshot,
    as_of: i64,
    rarity: Option<&[RarityScores]>,
) -> Result<NftIndicators, IndicatorError> {
    IndicatorContext::new(collection, as_of).nft_indicators(token_id, rarity)
}

pub fn trader_indicators(address: &str, collection: &CollectionSnapshot, as_of: i64, wp: WhalePolicy) -> TraderIndicators {
    IndicatorContext::new(collection, as_of).trader_indicators(address, wp)
}

/// Every address appearing in the collection's activities up to `as_of`.
pub fn traders(collection: &CollectionSnapshot, as_of: i64) -> BTreeSet<&str> {
    collection
        .nfts
        .iter()
        .flat_map(|n| n.activities_until(as_of))
        .flat_map(|a| [a.from_address.as_str(), a.to_address.as_str()])
        .filter(|a| !a.is_empty())
        .collect()
}

/// Trader indicators at `as_of` as CSV, one row per trader in address order.
pub fn traders_csv(collection: &CollectionSnapshot, as_of: i64, wp: WhalePolicy) -> String {
    let ctx = IndicatorContext::new(collection, as_of);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "address",
        "holding_value",
        "pnl",
        "realized_pnl",
        "unrealized_pnl",
        "activity_count",
        "holdings",
        "is_whale",
    ])
    .expect("in-memory write");
    for t in traders(collection, as_of) {
        let i = ctx.trader_indicators(t, wp);
        w.write_record([
            i.address,
            i.holding_value.to_string(),
            i.pnl.to_string(),
            i.realized_pnl.to_string(),
            i.unrealized_pnl.to_string(),
            i.activity_count.to_string(),
            i.holdings.to_string(),
            i.is_whale.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}
