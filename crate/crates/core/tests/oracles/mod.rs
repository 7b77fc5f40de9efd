//! Brute-force reference implementations used as test oracles.
//!
//! Each one recomputes a quantity from raw snapshot data without going
//! through the library's indexes, replays or trees.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use chrono::NaiveDate;
use nftscope_core::features::Descriptor;
use nftscope_core::{ActivityKind, CollectionSnapshot};

pub fn jaccard(a: &[(String, String)], b: &[(String, String)]) -> f64 {
    let sa: HashSet<&(String, String)> = a.iter().collect();
    let sb: HashSet<&(String, String)> = b.iter().collect();
    let inter = sa.intersection(&sb).count();
    let union = sa.union(&sb).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn trait_pairs(c: &CollectionSnapshot, i: usize) -> Vec<(String, String)> {
    c.nfts[i]
        .traits
        .iter()
        .map(|t| (t.trait_type.clone(), t.value.clone()))
        .collect()
}

/// Double loop over the collection, self pair included.
pub fn trait_rarities(c: &CollectionSnapshot) -> Vec<f64> {
    let m = c.nfts.len();
    (0..m)
        .map(|z| {
            let tz = trait_pairs(c, z);
            let mut sum = 0.0;
            for i in 0..m {
                sum += 1.0 - jaccard(&tz, &trait_pairs(c, i));
            }
            sum / m as f64
        })
        .collect()
}

/// Fraction of `query` without a ratio-test match, by exhaustive f64 search.
pub fn no_match_ratio(query: &[Descriptor], target: &[Descriptor], threshold: f64) -> f64 {
    if query.is_empty() {
        return 0.0;
    }
    if target.len() < 2 {
        return 1.0;
    }
    let unmatched = query
        .iter()
        .filter(|q| {
            let mut d: Vec<f64> = target
                .iter()
                .map(|t| {
                    q.vector
                        .iter()
                        .zip(&t.vector)
                        .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            d.sort_by(f64::total_cmp);
            !(d[0] < threshold * d[1])
        })
        .count();
    unmatched as f64 / query.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Day {
    pub date: NaiveDate,
    pub market_cap_gwei: i64,
    pub average_price: f64,
    pub floor_gwei: i64,
    pub volume_gwei: i64,
    pub liquidity: f64,
    pub sales: usize,
    pub transfers: usize,
    pub whale: Vec<(i64, i64)>,
    pub normal: Vec<(i64, i64)>,
}

/// Per-day scan over raw activities.
pub fn market_series(c: &CollectionSnapshot, from: NaiveDate, to: NaiveDate, min_holdings: usize) -> Vec<Day> {
    let day_of = |ts: i64| ts.div_euclid(86_400);
    let date_to_day = |d: NaiveDate| d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp() / 86_400;

    // Every activity with its sort key.
    let mut all = Vec::new();
    for (n, nft) in c.nfts.iter().enumerate() {
        for (i, a) in nft.activities.iter().enumerate() {
            all.push((a.timestamp, n, i));
        }
    }
    all.sort();

    // Seller holdings before each sale: count NFTs whose holder, after all
    // earlier events, is the seller.
    let holder_before = |n: usize, key: (i64, usize, usize)| -> Option<String> {
        let mut h = None;
        for (i, a) in c.nfts[n].activities.iter().enumerate() {
            if (a.timestamp, n, i) < key {
                h = Some(a.to_address.clone());
            }
        }
        h
    };
    let is_whale = |key: (i64, usize, usize), seller: &str| {
        let held = (0..c.nfts.len())
            .filter(|&n| holder_before(n, key).as_deref() == Some(seller))
            .count();
        held >= min_holdings
    };

    let sale_prices_on = |day: i64, until: i64| -> Vec<i64> {
        c.nfts
            .iter()
            .flat_map(|n| &n.activities)
            .filter(|a| a.kind == ActivityKind::Sale && day_of(a.timestamp) == day && a.timestamp <= until)
            .map(|a| a.price_eth.gwei())
            .collect()
    };
    let floor = |end: i64| -> i64 {
        let mut day = day_of(end);
        let first_sale_day = c
            .nfts
            .iter()
            .flat_map(|n| &n.activities)
            .filter(|a| a.kind == ActivityKind::Sale)
            .map(|a| day_of(a.timestamp))
            .min();
        let Some(first) = first_sale_day else { return 0 };
        while day >= first {
            let prices = sale_prices_on(day, end);
            if let Some(m) = prices.iter().min() {
                return *m;
            }
            day -= 1;
        }
        0
    };

    let (first, last) = (date_to_day(from), date_to_day(to));
    let mut out = Vec::new();
    for day in first..=last {
        let end = (day + 1) * 86_400 - 1;
        let fl = floor(end);
        let mut cap = 0;
        for nft in &c.nfts {
            let last_sale = nft
                .activities
                .iter()
                .filter(|a| a.kind == ActivityKind::Sale && a.timestamp <= end)
                .last();
            cap += last_sale.map(|a| a.price_eth.gwei()).unwrap_or(fl);
        }
        let mut d = Day {
            date: chrono::DateTime::from_timestamp(day * 86_400, 0).unwrap().date_naive(),
            market_cap_gwei: cap,
            average_price: 0.0,
            floor_gwei: fl,
            volume_gwei: 0,
            liquidity: 0.0,
            sales: 0,
            transfers: 0,
            whale: vec![],
            normal: vec![],
        };
        for &(ts, n, i) in &all {
            if day_of(ts) != day {
                continue;
            }
            let a = &c.nfts[n].activities[i];
            match a.kind {
                ActivityKind::Sale => {
                    d.sales += 1;
                    d.volume_gwei += a.price_eth.gwei();
                    let p = (a.timestamp, a.price_eth.gwei());
                    if is_whale((ts, n, i), &a.from_address) {
                        d.whale.push(p);
                    } else {
                        d.normal.push(p);
                    }
                }
                ActivityKind::Transfer => d.transfers += 1,
                ActivityKind::Mint => {}
            }
        }
        if d.sales > 0 {
            d.average_price = (d.volume_gwei as f64 / 1e9) / d.sales as f64;
        }
        d.liquidity = d.sales as f64 * 100.0 / c.nfts.len() as f64;
        out.push(d);
    }
    out
}

/// Realized PnL per trader on one NFT: each sale's price minus what the
/// seller paid when acquiring it.
pub fn realized_pnl_by_trader(c: &CollectionSnapshot, nft: usize) -> BTreeMap<String, i64> {
    let mut out = BTreeMap::new();
    let acts = &c.nfts[nft].activities;
    for (k, a) in acts.iter().enumerate() {
        if a.kind != ActivityKind::Sale {
            continue;
        }
        let acquired = acts[..k].iter().rev().find(|b| b.to_address == a.from_address).unwrap();
        let cost = if acquired.kind == ActivityKind::Transfer {
            0
        } else {
            acquired.price_eth.gwei()
        };
        *out.entry(a.from_address.clone()).or_insert(0) += a.price_eth.gwei() - cost;
    }
    out
}
