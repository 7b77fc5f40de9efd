//! Trait rarity, image rarity and the weighted combination.
//!
//! Both averages run over the whole collection including the NFT itself;
//! the self term is zero by definition, so scores are `(m - 1) / m` of the
//! leave-one-out mean.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{
    content_hash, extract_features_from_bytes, params_hash, ChannelDescriptorSet, ChannelTag, DescriptorIndex,
    FeatureCache, FeatureCacheRecord, FeatureError, MatchParams, MatchStrategy, ScaleSpaceParams,
};
use crate::ingestion::{CollectionSnapshot, ImageSource, TraitSet};

#[derive(Debug, Error)]
pub enum RarityError {
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("no cached features for token {0:?}")]
    MissingFeatures(String),
    #[error("invalid weight {0}: must lie in [0, 1]")]
    InvalidWeight(f64),
    #[error("invalid match parameters: {0}")]
    InvalidMatchParams(String),
    #[error("token {token:?}: {source}")]
    Feature {
        token: String,
        #[source]
        source: FeatureError,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RarityScores {
    pub token_id: String,
    pub trait_rarity: f64,
    pub image_rarity: f64,
    pub collection_size: usize,
}

/// Directional per-channel no-match ratios from `token_a` to `token_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDifference {
    pub token_a: String,
    pub token_b: String,
    pub dif_r: f64,
    pub dif_g: f64,
    pub dif_b: f64,
}

impl PairDifference {
    pub fn sum(&self) -> f64 {
        self.dif_r + self.dif_g + self.dif_b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RarityWeights {
    w_trait: f64,
}

impl RarityWeights {
    pub fn new(w_trait: f64) -> Result<Self, RarityError> {
        if !(0.0..=1.0).contains(&w_trait) {
            return Err(RarityError::InvalidWeight(w_trait));
        }
        Ok(RarityWeights { w_trait })
    }

    pub fn w_trait(self) -> f64 {
        self.w_trait
    }

    pub fn w_image(self) -> f64 {
        1.0 - self.w_trait
    }
}

impl Default for RarityWeights {
    fn default() -> Self {
        RarityWeights { w_trait: 0.5 }
    }
}

/// `|x ∩ y| / |x ∪ y|`, with two empty sets counting as identical.
pub fn jaccard_similarity(x: &TraitSet, y: &TraitSet) -> f64 {
    let inter = x.intersection_len(y);
    let union = x.len() + y.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn trait_rarity(token_id: &str, collection: &CollectionSnapshot) -> Result<f64, RarityError> {
    let nft = collection
        .nft(token_id)
        .ok_or_else(|| RarityError::UnknownToken(token_id.into()))?;
    Ok(trait_rarity_of(&nft.traits, collection))
}

fn trait_rarity_of(traits: &TraitSet, collection: &CollectionSnapshot) -> f64 {
    let m = collection.len();
    if m == 0 {
        return 0.0;
    }
    let sum: f64 = collection
        .nfts
        .iter()
        .map(|other| 1.0 - jaccard_similarity(traits, &other.traits))
        .sum();
    sum / m as f64
}

/// Trait rarity of every NFT, in collection order.
pub fn trait_rarities(collection: &CollectionSnapshot) -> Vec<f64> {
    collection
        .nfts
        .iter()
        .map(|n| trait_rarity_of(&n.traits, collection))
        .collect()
}

pub fn weighted_rarity(s: &RarityScores, w: RarityWeights) -> f64 {
    w.w_trait * s.trait_rarity + w.w_image() * s.image_rarity
}

/// Descending score, then ascending token id.
pub fn rank_order(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

/// Indices into `scores` sorted by weighted rarity.
pub fn rank(scores: &[RarityScores], w: RarityWeights) -> Vec<usize> {
    let weighted: Vec<f64> = scores.iter().map(|s| weighted_rarity(s, w)).collect();
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&i, &j| rank_order((&scores[i].token_id, weighted[i]), (&scores[j].token_id, weighted[j])));
    idx
}

/// Descriptor sets keyed by token id.
pub type CollectionFeatures = BTreeMap<String, ChannelDescriptorSet>;

fn features_of<'a>(features: &'a CollectionFeatures, token: &str) -> Result<&'a ChannelDescriptorSet, RarityError> {
    features
        .get(token)
        .ok_or_else(|| RarityError::MissingFeatures(token.into()))
}

/// No-match ratio of Z's channel descriptors against Y's.
pub fn image_difference(
    z: &str,
    y: &str,
    channel: ChannelTag,
    features: &CollectionFeatures,
    mp: &MatchParams,
) -> Result<f64, RarityError> {
    let (fz, fy) = (features_of(features, z)?, features_of(features, y)?);
    let index = DescriptorIndex::build(fy.get(channel));
    Ok(index.match_query(fz.get(channel), mp, MatchStrategy::Auto).no_match_ratio)
}

/// Image rarity of one NFT, matching against every other NFT on demand.
pub fn image_rarity(
    z: &str,
    collection: &CollectionSnapshot,
    features: &CollectionFeatures,
    mp: &MatchParams,
) -> Result<f64, RarityError> {
    if collection.nft(z).is_none() {
        return Err(RarityError::UnknownToken(z.into()));
    }
    let mut sum = 0.0;
    for other in &collection.nfts {
        if other.token_id == z {
            continue;
        }
        for tag in ChannelTag::ALL {
            sum += image_difference(z, &other.token_id, tag, features, mp)?;
        }
    }
    Ok(sum / (3 * collection.len()) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RarityConfig {
    pub scale: ScaleSpaceParams,
    pub matching: MatchParams,
    /// Worker threads for extraction and pairwise matching; 0 means all cores.
    pub jobs: usize,
}

impl Default for RarityConfig {
    fn default() -> Self {
        RarityConfig {
            scale: ScaleSpaceParams::default(),
            matching: MatchParams::default(),
            jobs: 0,
        }
    }
}

impl RarityConfig {
    /// Identifies results that depend on both extraction and matching.
    pub fn params_hash(&self) -> String {
        let both = serde_json::json!({ "scale": self.scale, "matching": self.matching });
        content_hash(both.to_string().as_bytes())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionStats {
    pub extracted: usize,
    pub cache_hits: usize,
}

#[derive(Debug, Clone)]
pub struct RarityRun {
    pub scores: Vec<RarityScores>,
    /// Every ordered pair `(a, b)` with `a != b`, sorted by `(token_a, token_b)`.
    pub pairs: Vec<PairDifference>,
    pub stats: ExtractionStats,
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, RarityError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| RarityError::Pool(e.to_string()))
}

/// Extracts (or loads from `cache`) descriptors for every NFT.
pub fn extract_collection_features(
    collection: &CollectionSnapshot,
    images: &dyn ImageSource,
    cfg: &RarityConfig,
    cache: Option<&FeatureCache>,
) -> Result<(CollectionFeatures, ExtractionStats), RarityError> {
    cfg.scale.validate().map_err(|source| RarityError::Feature {
        token: String::new(),
        source,
    })?;
    let phash = params_hash(&cfg.scale);
    let results: Vec<Result<(String, ChannelDescriptorSet, bool), RarityError>> = pool(cfg.jobs)?.install(|| {
        collection
            .nfts
            .par_iter()
            .map(|nft| {
                let wrap = |source: FeatureError| RarityError::Feature {
                    token: nft.token_id.clone(),
                    source,
                };
                let bytes = images.image_bytes(&nft.image_ref).map_err(|e| wrap(e.into()))?;
                let ihash = content_hash(&bytes);
                if let Some(set) = cache.and_then(|c| c.get(&ihash, &phash)) {
                    return Ok((nft.token_id.clone(), set, true));
                }
                let set = extract_features_from_bytes(&bytes, &cfg.scale).map_err(wrap)?;
                if let Some(c) = cache {
                    let record = FeatureCacheRecord {
                        image_hash: ihash,
                        params_hash: phash.clone(),
                        channels: set,
                    };
                    c.put(&record).map_err(|e| wrap(e.into()))?;
                    return Ok((nft.token_id.clone(), record.channels, false));
                }
                Ok((nft.token_id.clone(), set, false))
            })
            .collect()
    });
    let mut features = CollectionFeatures::new();
    let mut stats = ExtractionStats::default();
    for r in results {
        let (token, set, hit) = r?;
        if hit {
            stats.cache_hits += 1;
        } else {
            stats.extracted += 1;
        }
        features.insert(token, set);
    }
    Ok((features, stats))
}

/// All ordered pair differences, computed on `jobs` workers.
pub fn pair_differences(
    collection: &CollectionSnapshot,
    features: &CollectionFeatures,
    mp: &MatchParams,
    jobs: usize,
) -> Result<Vec<PairDifference>, RarityError> {
    mp.validate().map_err(RarityError::InvalidMatchParams)?;
    let tokens: Vec<&str> = collection.nfts.iter().map(|n| n.token_id.as_str()).collect();
    let sets: Vec<&ChannelDescriptorSet> = tokens
        .iter()
        .map(|t| features_of(features, t))
        .collect::<Result<_, _>>()?;
    let pool = pool(jobs)?;
    let indexes: Vec<[DescriptorIndex; 3]> = pool.install(|| {
        sets.par_iter()
            .map(|s| ChannelTag::ALL.map(|tag| DescriptorIndex::build(s.get(tag))))
            .collect()
    });
    let n = tokens.len();
    let mut pairs: Vec<PairDifference> = pool.install(|| {
        (0..n * n)
            .into_par_iter()
            .filter(|k| k / n != k % n)
            .map(|k| {
                let (a, b) = (k / n, k % n);
                let dif = ChannelTag::ALL.map(|tag| {
                    indexes[b][tag.index()]
                        .match_query(sets[a].get(tag), mp, MatchStrategy::Auto)
                        .no_match_ratio
                });
                PairDifference {
                    token_a: tokens[a].to_string(),
                    token_b: tokens[b].to_string(),
                    dif_r: dif[0],
                    dif_g: dif[1],
                    dif_b: dif[2],
                }
            })
            .collect()
    });
    pairs.sort_by(|x, y| (&x.token_a, &x.token_b).cmp(&(&y.token_a, &y.token_b)));
    Ok(pairs)
}

/// Combines cached pair differences into scores, in collection order.
pub fn scores_from_pairs(collection: &CollectionSnapshot, pairs: &[PairDifference]) -> Vec<RarityScores> {
    let m = collection.len();
    let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
    for p in pairs {
        *sums.entry(p.token_a.as_str()).or_default() += p.sum();
    }
    let traits = trait_rarities(collection);
    collection
        .nfts
        .iter()
        .zip(traits)
        .map(|(nft, t)| RarityScores {
            token_id: nft.token_id.clone(),
            trait_rarity: t,
            image_rarity: sums.get(nft.token_id.as_str()).copied().unwrap_or(0.0) / (3 * m) as f64,
            collection_size: m,
        })
        .collect()
}

pub fn compute_collection_rarity(
    collection: &CollectionSnapshot,
    images: &dyn ImageSource,
    cfg: &RarityConfig,
    cache: Option<&FeatureCache>,
) -> Result<RarityRun, RarityError> {
    let (features, stats) = extract_collection_features(collection, images, cfg, cache)?;
    let pairs = pair_differences(collection, &features, &cfg.matching, cfg.jobs)?;
    Ok(RarityRun {
        scores: scores_from_pairs(collection, &pairs),
        pairs,
        stats,
    })
}

/// CSV with columns `token_id,trait_rarity,image_rarity`, six decimals.
pub fn to_csv(scores: &[RarityScores]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["token_id", "trait_rarity", "image_rarity"])
        .expect("in-memory write");
    for s in scores {
        w.write_record([
            s.token_id.clone(),
            format!("{:.6}", s.trait_rarity),
            format!("{:.6}", s.image_rarity),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::traits;
    use crate::ingestion::{CollectionInfo, NftRecord};

    fn collection(sets: Vec<TraitSet>) -> CollectionSnapshot {
        CollectionSnapshot {
            info: CollectionInfo {
                id: "c".into(),
                name: "c".into(),
                description: String::new(),
                official_url: String::new(),
                created_at: 0,
                snapshot_at: 0,
            },
            nfts: sets
                .into_iter()
                .enumerate()
                .map(|(i, t)| NftRecord {
                    token_id: format!("{i}"),
                    image_ref: format!("{i}.png"),
                    traits: t,
                    activities: vec![],
                })
                .collect(),
        }
    }

    #[test]
    fn jaccard_examples() {
        let ab = traits([("t", "A"), ("t", "B")]);
        let bc = traits([("t", "B"), ("t", "C")]);
        assert_eq!(jaccard_similarity(&ab, &ab), 1.0);
        assert_eq!(jaccard_similarity(&ab, &bc), 1.0 / 3.0);
        assert_eq!(jaccard_similarity(&traits([("t", "A")]), &traits([("t", "B")])), 0.0);
        assert_eq!(jaccard_similarity(&TraitSet::new(), &TraitSet::new()), 1.0);
    }

    #[test]
    fn three_nft_trait_rarity() {
        let a = traits([("t", "A")]);
        let c = collection(vec![a.clone(), a, traits([("t", "B")])]);
        assert_eq!(trait_rarities(&c), vec![1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0]);
    }

    #[test]
    fn identical_and_singleton_collections() {
        let a = traits([("x", "1"), ("y", "2")]);
        let c = collection(vec![a.clone(), a.clone(), a.clone()]);
        assert_eq!(trait_rarities(&c), vec![0.0; 3]);
        assert_eq!(trait_rarities(&collection(vec![a])), vec![0.0]);
        assert!(matches!(trait_rarity("zz", &c), Err(RarityError::UnknownToken(_))));
    }

    #[test]
    fn weights() {
        let s = RarityScores {
            token_id: "1".into(),
            trait_rarity: 0.4,
            image_rarity: 0.8,
            collection_size: 2,
        };
        assert_eq!(weighted_rarity(&s, RarityWeights::new(1.0).unwrap()), 0.4);
        assert_eq!(weighted_rarity(&s, RarityWeights::new(0.0).unwrap()), 0.8);
        assert!((weighted_rarity(&s, RarityWeights::default()) - 0.6).abs() < 1e-15);
        assert!(RarityWeights::new(1.2).is_err());
        assert!(RarityWeights::new(f64::NAN).is_err());
    }

    #[test]
    fn ranking_breaks_ties_by_token() {
        let mk = |t: &str, v: f64| RarityScores {
            token_id: t.into(),
            trait_rarity: v,
            image_rarity: v,
            collection_size: 3,
        };
        let scores = vec![mk("b", 0.5), mk("a", 0.5), mk("c", 0.9)];
        assert_eq!(rank(&scores, RarityWeights::default()), vec![2, 1, 0]);
    }

    #[test]
    fn csv_has_six_decimals() {
        let s = RarityScores {
            token_id: "7".into(),
            trait_rarity: 1.0 / 3.0,
            image_rarity: 0.0,
            collection_size: 3,
        };
        assert_eq!(to_csv(&[s]), "token_id,trait_rarity,image_rarity\n7,0.333333,0.000000\n");
    }
}
