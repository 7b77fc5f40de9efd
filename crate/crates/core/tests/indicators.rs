mod oracles;

use std::collections::BTreeMap;

use nftscope_core::fixtures::{generate, Scenario, DAY, DEFAULT_SEED, EPOCH, MARKET_FIVE_SALE_DAY, MARKET_WHALE};
use nftscope_core::indicators::{
    classify_sale, day_date, day_index, market_series, nft_indicators, trader_indicators, traders,
    IndicatorContext, SaleClass, WhalePolicy,
};
use nftscope_core::{ActivityKind, CollectionSnapshot, Eth};

fn span(c: &CollectionSnapshot) -> (chrono::NaiveDate, chrono::NaiveDate) {
    let first = c.nfts.iter().flat_map(|n| &n.activities).map(|a| a.timestamp).min().unwrap();
    (day_date(day_index(first) - 1), day_date(day_index(c.info.snapshot_at)))
}

#[test]
fn market_series_equals_naive_replay() {
    for sc in Scenario::ALL {
        let c = generate(sc, DEFAULT_SEED).snapshot;
        let (from, to) = span(&c);
        let got = market_series(&c, from, to, WhalePolicy::default()).unwrap();
        let want = oracles::market_series(&c, from, to, 10);
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            let g_as = oracles::Day {
                date: g.date,
                market_cap_gwei: g.market_cap.gwei(),
                average_price: g.average_price,
                floor_gwei: g.floor_price.gwei(),
                volume_gwei: g.volume.gwei(),
                liquidity: g.liquidity,
                sales: g.sales,
                transfers: g.transfers,
                whale: g.whale_sales.iter().map(|p| (p.timestamp, p.price.gwei())).collect(),
                normal: g.normal_sales.iter().map(|p| (p.timestamp, p.price.gwei())).collect(),
            };
            assert_eq!(&g_as, w, "{} {}", sc.name(), g.date);
            assert_eq!(g.whale_sales.len() + g.normal_sales.len(), g.sales);
        }
    }
}

#[test]
fn market_fixture_liquidity_and_whale() {
    let c = generate(Scenario::Market, DEFAULT_SEED).snapshot;
    let day = day_date(day_index(EPOCH) + MARKET_FIVE_SALE_DAY);
    let s = market_series(&c, day, day, WhalePolicy::default()).unwrap();
    assert_eq!(s[0].sales, 5);
    assert_eq!(s[0].liquidity, 5.0);

    let whale_sales: Vec<_> = c
        .nfts
        .iter()
        .flat_map(|n| &n.activities)
        .filter(|a| a.kind == ActivityKind::Sale && a.from_address == MARKET_WHALE)
        .collect();
    assert_eq!(whale_sales.len(), 2);
    let wp = WhalePolicy::default();
    assert_eq!(classify_sale(whale_sales[0], &c, wp).unwrap(), SaleClass::Normal);
    assert_eq!(classify_sale(whale_sales[1], &c, wp).unwrap(), SaleClass::Whale);
}

#[test]
fn market_cap_changes_only_on_sale_days() {
    for sc in Scenario::ALL {
        let c = generate(sc, DEFAULT_SEED).snapshot;
        let (from, to) = span(&c);
        let s = market_series(&c, from, to, WhalePolicy::default()).unwrap();
        for w in s.windows(2) {
            assert!(w[1].market_cap >= Eth::ZERO);
            if w[1].sales == 0 {
                assert_eq!(w[1].market_cap, w[0].market_cap, "{} {}", sc.name(), w[1].date);
                assert_eq!(w[1].floor_price, w[0].floor_price);
            }
        }
    }
}

#[test]
fn pnl_telescopes_on_transfer_free_nfts() {
    for sc in Scenario::ALL {
        let c = generate(sc, DEFAULT_SEED).snapshot;
        let as_of = c.info.snapshot_at;
        let ctx = IndicatorContext::new(&c, as_of);
        for (n, nft) in c.nfts.iter().enumerate() {
            let acts = &nft.activities;
            if acts.iter().any(|a| a.kind == ActivityKind::Transfer) || !acts.iter().any(|a| a.kind == ActivityKind::Sale) {
                continue;
            }
            let last = acts.iter().rev().find(|a| a.kind == ActivityKind::Sale).unwrap().price_eth;
            let mint = acts[0].price_eth;
            let oracle: i64 = oracles::realized_pnl_by_trader(&c, n).values().sum();
            assert_eq!(oracle, (last - mint).gwei());
            let sellers_pnl = ctx.nft_indicators(&nft.token_id, None).unwrap().sellers_pnl;
            assert_eq!(sellers_pnl, last - mint, "{} {}", sc.name(), nft.token_id);
        }
        // Trader-level realized PnL agrees with the per-NFT oracle.
        let mut expected: BTreeMap<String, i64> = BTreeMap::new();
        for n in 0..c.nfts.len() {
            for (t, v) in oracles::realized_pnl_by_trader(&c, n) {
                *expected.entry(t).or_default() += v;
            }
        }
        for t in traders(&c, as_of) {
            let got = trader_indicators(t, &c, as_of, WhalePolicy::default()).realized_pnl.gwei();
            assert_eq!(got, expected.get(t).copied().unwrap_or(0), "{} {t}", sc.name());
        }
    }
}

#[test]
fn wash_seller_realizes_a_loss() {
    let c = generate(Scenario::Fig7Wash, DEFAULT_SEED).snapshot;
    let blue = trader_indicators(
        nftscope_core::fixtures::FIG7_BLUE,
        &c,
        c.info.snapshot_at,
        WhalePolicy::default(),
    );
    assert!(blue.realized_pnl < Eth::ZERO);
    let focus = nft_indicators(nftscope_core::fixtures::FIG7_FOCUS_TOKEN, &c, c.info.snapshot_at, None).unwrap();
    assert!(focus.sellers_pnl < Eth::ZERO);
}

#[test]
fn price_rank_is_a_sorted_permutation() {
    for sc in Scenario::ALL {
        let c = generate(sc, DEFAULT_SEED).snapshot;
        let all = IndicatorContext::new(&c, c.info.snapshot_at).nft_indicators_all(None);
        let mut ranks: Vec<usize> = all.iter().map(|i| i.price_rank).collect();
        ranks.sort();
        assert_eq!(ranks, (1..=c.len()).collect::<Vec<_>>());

        let sold = |t: &str| c.nft(t).unwrap().activities.iter().any(|a| a.kind == ActivityKind::Sale);
        let mut by_rank = all.clone();
        by_rank.sort_by_key(|i| i.price_rank);
        for w in by_rank.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let key = |i: &nftscope_core::indicators::NftIndicators| (!sold(&i.token_id), std::cmp::Reverse(i.last_price));
            assert!(key(a) < key(b) || (key(a) == key(b) && a.token_id < b.token_id));
        }
    }
}

#[test]
fn holdings_are_conserved() {
    for sc in Scenario::ALL {
        let c = generate(sc, DEFAULT_SEED).snapshot;
        for as_of in [EPOCH, EPOCH + 5 * DAY, c.info.snapshot_at] {
            let ctx = IndicatorContext::new(&c, as_of);
            let minted = c.nfts.iter().filter(|n| n.activities_until(as_of).first().is_some()).count();
            assert_eq!(ctx.holdings().values().sum::<usize>(), minted);
            let per_trader: usize = traders(&c, as_of)
                .iter()
                .map(|t| ctx.trader_indicators(t, WhalePolicy::default()).holdings)
                .sum();
            assert_eq!(per_trader, minted);
        }
    }
}

#[test]
fn activity_counts_match_raw_logs() {
    let c = generate(Scenario::Basic, DEFAULT_SEED).snapshot;
    for t in traders(&c, c.info.snapshot_at) {
        let raw = c
            .nfts
            .iter()
            .flat_map(|n| &n.activities)
            .filter(|a| a.from_address == t || a.to_address == t)
            .count();
        assert_eq!(trader_indicators(t, &c, c.info.snapshot_at, WhalePolicy::default()).activity_count, raw);
    }
}
