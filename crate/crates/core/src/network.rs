//! Logical transaction network around one NFT.
//!
//! Related traders are the addresses in the focus NFT's log; the network
//! then includes every NFT those traders touched. Sales become rings whose
//! radii are prices normalized by the NFT's highest sale, transfers become
//! markers. Layout is left to the client.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::eth::Eth;
use crate::indicators::{IndicatorContext, IndicatorError, PriceBook, TraderIndicators, WhalePolicy};
use crate::ingestion::{Activity, ActivityKind, CollectionSnapshot};

pub const NETWORK_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Behavior {
    Mint,
    Sale,
    Transfer,
}

impl From<ActivityKind> for Behavior {
    fn from(k: ActivityKind) -> Self {
        match k {
            ActivityKind::Mint => Behavior::Mint,
            ActivityKind::Sale => Behavior::Sale,
            ActivityKind::Transfer => Behavior::Transfer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Minted,
    Bought,
    Sold,
    TransferredIn,
    TransferredOut,
    Holds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingDescriptor {
    pub order_index: usize,
    pub inner_fraction: f64,
    pub outer_fraction: f64,
    pub price: Eth,
    pub buyer: String,
    /// `None` when the buyer is not a related trader.
    pub buyer_color_key: Option<usize>,
    pub shaded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMarker {
    /// Position within the NFT's full activity log.
    pub order_index: usize,
    pub recipient: String,
    pub recipient_color_key: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraderNode {
    pub address: String,
    pub behavior_shapes: BTreeSet<Behavior>,
    pub color_key: usize,
    pub indicators: TraderIndicators,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NftNode {
    pub token_id: String,
    pub rings: Vec<RingDescriptor>,
    pub transfer_markers: Vec<TransferMarker>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub trader: String,
    pub token_id: String,
    pub relation: Relation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionNetwork {
    pub schema: u32,
    pub collection_id: String,
    pub focus_token: String,
    pub as_of: i64,
    pub trader_nodes: Vec<TraderNode>,
    pub nft_nodes: Vec<NftNode>,
    pub edges: Vec<Edge>,
}

/// Rings for the sales and markers for the transfers of one activity log.
///
/// The first ring's inner radius is the mint price. A ring is shaded when
/// the next sale is strictly cheaper; the last one compares against
/// `valuation_at_end`. Colour keys are left unset.
pub fn ring_descriptors(activities: &[Activity], valuation_at_end: Eth) -> (Vec<RingDescriptor>, Vec<TransferMarker>) {
    let max = activities
        .iter()
        .filter(|a| a.kind == ActivityKind::Sale)
        .map(|a| a.price_eth)
        .max()
        .unwrap_or(Eth::ZERO);
    let frac = |p: Eth| {
        if max.gwei() <= 0 {
            0.0
        } else {
            p.ratio(max).clamp(0.0, 1.0)
        }
    };

    let sales: Vec<&Activity> = activities.iter().filter(|a| a.kind == ActivityKind::Sale).collect();
    let mut pre = activities
        .iter()
        .find(|a| a.kind == ActivityKind::Mint)
        .map(|a| a.price_eth)
        .unwrap_or(Eth::ZERO);
    let mut rings = Vec::with_capacity(sales.len());
    for (k, s) in sales.iter().enumerate() {
        let after = sales.get(k + 1).map(|n| n.price_eth).unwrap_or(valuation_at_end);
        rings.push(RingDescriptor {
            order_index: k,
            inner_fraction: frac(pre),
            outer_fraction: frac(s.price_eth),
            price: s.price_eth,
            buyer: s.to_address.clone(),
            buyer_color_key: None,
            shaded: after < s.price_eth,
        });
        pre = s.price_eth;
    }

    let markers = activities
        .iter()
        .enumerate()
        .filter(|(_, a)| a.kind == ActivityKind::Transfer)
        .map(|(i, a)| TransferMarker {
            order_index: i,
            recipient: a.to_address.clone(),
            recipient_color_key: None,
        })
        .collect();
    (rings, markers)
}

fn relations(a: &Activity, address: &str) -> impl Iterator<Item = Relation> {
    let from = a.from_address == address;
    let to = a.to_address == address;
    let pair = match a.kind {
        ActivityKind::Mint => [None, to.then_some(Relation::Minted)],
        ActivityKind::Sale => [from.then_some(Relation::Sold), to.then_some(Relation::Bought)],
        ActivityKind::Transfer => [
            from.then_some(Relation::TransferredOut),
            to.then_some(Relation::TransferredIn),
        ],
    };
    pair.into_iter().flatten()
}

/// Builds the network around `token_id` from activities up to `as_of`.
///
/// A held NFT's last ring is compared against the collection floor at
/// `as_of`, since its own last sale would never register a fall.
pub fn build_transaction_network(
    token_id: &str,
    collection: &CollectionSnapshot,
    as_of: i64,
    wp: WhalePolicy,
) -> Result<TransactionNetwork, IndicatorError> {
    let focus = collection
        .nft_index(token_id)
        .ok_or_else(|| IndicatorError::UnknownToken(token_id.into()))?;
    let ctx = IndicatorContext::new(collection, as_of);
    let focus_log = collection.nfts[focus].activities_until(as_of);

    let mut related: Vec<&str> = Vec::new();
    let mut shapes: HashMap<&str, BTreeSet<Behavior>> = HashMap::new();
    for a in focus_log {
        for addr in [a.from_address.as_str(), a.to_address.as_str()] {
            if addr.is_empty() {
                continue;
            }
            if !related.contains(&addr) {
                related.push(addr);
            }
            shapes.entry(addr).or_default().insert(a.kind.into());
        }
    }
    let color: HashMap<&str, usize> = related.iter().enumerate().map(|(i, a)| (*a, i)).collect();

    let touched: Vec<usize> = std::iter::once(focus)
        .chain((0..collection.len()).filter(|&n| {
            n != focus
                && collection.nfts[n]
                    .activities_until(as_of)
                    .iter()
                    .any(|a| color.contains_key(a.from_address.as_str()) || color.contains_key(a.to_address.as_str()))
        }))
        .collect();

    let floor = PriceBook::new(collection).floor_at(as_of);
    let mut nft_nodes = Vec::with_capacity(touched.len());
    let mut edges = Vec::new();
    for &n in &touched {
        let nft = &collection.nfts[n];
        let log = nft.activities_until(as_of);
        let (mut rings, mut markers) = ring_descriptors(log, floor);
        for r in &mut rings {
            r.buyer_color_key = color.get(r.buyer.as_str()).copied();
        }
        for m in &mut markers {
            m.recipient_color_key = color.get(m.recipient.as_str()).copied();
        }
        nft_nodes.push(NftNode {
            token_id: nft.token_id.clone(),
            rings,
            transfer_markers: markers,
        });

        for &addr in &related {
            let mut seen = BTreeSet::new();
            let held = nft.holder_at(as_of) == Some(addr);
            for rel in log
                .iter()
                .flat_map(|a| relations(a, addr))
                .chain(held.then_some(Relation::Holds))
            {
                if seen.insert(rel) {
                    edges.push(Edge {
                        trader: addr.to_string(),
                        token_id: nft.token_id.clone(),
                        relation: rel,
                    });
                }
            }
        }
    }

    let trader_nodes = related
        .iter()
        .map(|&addr| TraderNode {
            address: addr.to_string(),
            behavior_shapes: shapes.remove(addr).unwrap_or_default(),
            color_key: color[addr],
            indicators: ctx.trader_indicators(addr, wp),
        })
        .collect();

    Ok(TransactionNetwork {
        schema: NETWORK_SCHEMA,
        collection_id: collection.id().to_string(),
        focus_token: token_id.to_string(),
        as_of,
        trader_nodes,
        nft_nodes,
        edges,
    })
}
