//! Per-channel SIFT descriptors and ratio-test matching.
//!
//! Each RGB channel of an image goes through its own pipeline:
//! Gaussian scale space → difference of Gaussians → 26-neighbour extrema →
//! dominant orientations → 128-d descriptors. Descriptor sets are compared
//! with [`match_features`], which pairs every query descriptor with its two
//! nearest targets (best-bin-first over a k-d tree) and applies the ratio test.

mod cache;
mod descriptor;
mod image;
pub mod kdtree;
mod keypoints;
mod scale_space;

use ::image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::cache::{content_hash, params_hash, FeatureCache, FeatureCacheRecord};
pub use self::descriptor::{extract_descriptor, Descriptor, DescriptorSkip, DESCRIPTOR_LEN};
pub use self::image::{decode_rgb, split_channels, ChannelTag, ImageChannel, Plane};
pub use self::keypoints::{assign_orientation, detect_extrema, Keypoint, ORIENTATION_BINS};
pub use self::scale_space::{
    build_scale_space, compute_dog, gaussian_2d, gaussian_blur, DogPyramid, GaussianPyramid, ScaleSpaceParams,
};
use kdtree::{exact_two_nearest, KdTree, TwoNearest};

/// Images smaller than this in either dimension yield no descriptors.
pub const MIN_EXTRACTION_SIZE: usize = 16;
/// With `exact_fallback`, targets smaller than this are scanned exhaustively.
pub const EXACT_FALLBACK_LIMIT: usize = 64;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("image could not be decoded: {0}")]
    UndecodableImage(String),
    #[error("invalid scale-space parameters: {0}")]
    InvalidParams(String),
    #[error("invalid image channel: {0}")]
    InvalidChannel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Descriptors of one image, per colour channel, in extraction order
/// (octave, scale, y, x, orientation).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelDescriptorSet {
    #[serde(rename = "R")]
    pub r: Vec<Descriptor>,
    #[serde(rename = "G")]
    pub g: Vec<Descriptor>,
    #[serde(rename = "B")]
    pub b: Vec<Descriptor>,
}

impl ChannelDescriptorSet {
    pub fn get(&self, tag: ChannelTag) -> &[Descriptor] {
        match tag {
            ChannelTag::R => &self.r,
            ChannelTag::G => &self.g,
            ChannelTag::B => &self.b,
        }
    }

    fn get_mut(&mut self, tag: ChannelTag) -> &mut Vec<Descriptor> {
        match tag {
            ChannelTag::R => &mut self.r,
            ChannelTag::G => &mut self.g,
            ChannelTag::B => &mut self.b,
        }
    }

    pub fn total(&self) -> usize {
        self.r.len() + self.g.len() + self.b.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Descriptor> {
        self.r.iter().chain(&self.g).chain(&self.b)
    }
}

/// Runs the full pipeline on one channel.
pub fn extract_channel(ch: &ImageChannel, p: &ScaleSpaceParams) -> Result<Vec<Descriptor>, FeatureError> {
    p.validate()?;
    if ch.width() < MIN_EXTRACTION_SIZE || ch.height() < MIN_EXTRACTION_SIZE {
        return Ok(Vec::new());
    }
    let pyramid = build_scale_space(ch, p)?;
    let dog = compute_dog(&pyramid);
    let mut out: Vec<Descriptor> = detect_extrema(&dog, p)
        .iter()
        .flat_map(|k| assign_orientation(k, &pyramid))
        .filter_map(|k| extract_descriptor(&k, &pyramid).ok())
        .collect();
    out.sort_by(|a, b| {
        let (ka, kb) = (&a.origin, &b.origin);
        (ka.octave, ka.scale_index, ka.y, ka.x)
            .cmp(&(kb.octave, kb.scale_index, kb.y, kb.x))
            .then(ka.orientation.total_cmp(&kb.orientation))
    });
    Ok(out)
}

pub fn extract_features(image: &RgbImage, p: &ScaleSpaceParams) -> Result<ChannelDescriptorSet, FeatureError> {
    let mut set = ChannelDescriptorSet::default();
    for ch in split_channels(image) {
        *set.get_mut(ch.tag) = extract_channel(&ch, p)?;
    }
    Ok(set)
}

pub fn extract_features_from_bytes(bytes: &[u8], p: &ScaleSpaceParams) -> Result<ChannelDescriptorSet, FeatureError> {
    extract_features(&decode_rgb(bytes)?, p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    /// A query matches when `d1 / d2` is below this.
    pub ratio_threshold: f64,
    /// Leaves visited per best-bin-first query.
    pub bbf_max_checks: usize,
    /// Scan exhaustively when the target has fewer than 64 descriptors.
    pub exact_fallback: bool,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            ratio_threshold: 0.8,
            bbf_max_checks: 200,
            exact_fallback: true,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.ratio_threshold > 0.0 && self.ratio_threshold < 1.0) {
            return Err(format!("ratio_threshold {} must lie in (0, 1)", self.ratio_threshold));
        }
        if self.bbf_max_checks == 0 {
            return Err("bbf_max_checks must be positive".into());
        }
        Ok(())
    }

    /// The ratio test on Euclidean distances, evaluated on squared ones.
    /// Equal distances (including `0 = 0`) never match.
    #[inline]
    pub fn accepts(&self, two: &TwoNearest) -> bool {
        if !two.d2_sq.is_finite() {
            return false;
        }
        (two.d1_sq as f64).sqrt() < self.ratio_threshold * (two.d2_sq as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchStrategy {
    /// Exact scan for small targets when `exact_fallback` is set, otherwise BBF.
    Auto,
    Exact,
    Bbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub matched: usize,
    pub unmatched: usize,
    pub no_match_ratio: f64,
}

impl MatchReport {
    fn from_counts(matched: usize, unmatched: usize) -> Self {
        let total = matched + unmatched;
        MatchReport {
            matched,
            unmatched,
            no_match_ratio: if total == 0 { 0.0 } else { unmatched as f64 / total as f64 },
        }
    }
}

/// A target descriptor set prepared for repeated queries. Immutable and
/// shareable across threads once built.
#[derive(Debug, Clone)]
pub struct DescriptorIndex {
    tree: KdTree,
}

impl DescriptorIndex {
    pub fn build(target: &[Descriptor]) -> Self {
        let flat = target.iter().flat_map(|d| d.vector.iter().copied()).collect();
        DescriptorIndex {
            tree: KdTree::build(flat, DESCRIPTOR_LEN),
        }
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    pub fn two_nearest(&self, q: &[f32], mp: &MatchParams, strategy: MatchStrategy) -> TwoNearest {
        let exact = match strategy {
            MatchStrategy::Exact => true,
            MatchStrategy::Bbf => false,
            MatchStrategy::Auto => mp.exact_fallback && self.len() < EXACT_FALLBACK_LIMIT,
        };
        if exact {
            exact_two_nearest(self.tree.points(), DESCRIPTOR_LEN, q)
        } else {
            self.tree.bbf_two_nearest(q, mp.bbf_max_checks)
        }
    }

    /// Directional match of `query` against this index.
    pub fn match_query(&self, query: &[Descriptor], mp: &MatchParams, strategy: MatchStrategy) -> MatchReport {
        if query.is_empty() {
            return MatchReport::from_counts(0, 0);
        }
        if self.len() < 2 {
            return MatchReport::from_counts(0, query.len());
        }
        let matched = query
            .iter()
            .filter(|d| mp.accepts(&self.two_nearest(&d.vector, mp, strategy)))
            .count();
        MatchReport::from_counts(matched, query.len() - matched)
    }
}

/// Fraction of `query` descriptors without a ratio-test match in `target`.
///
/// An empty query gives ratio 0; a target with fewer than two descriptors
/// leaves every query descriptor unmatched.
pub fn match_features(query: &[Descriptor], target: &[Descriptor], mp: &MatchParams) -> MatchReport {
    match_features_with(query, target, mp, MatchStrategy::Auto)
}

pub fn match_features_with(
    query: &[Descriptor],
    target: &[Descriptor],
    mp: &MatchParams,
    strategy: MatchStrategy,
) -> MatchReport {
    DescriptorIndex::build(target).match_query(query, mp, strategy)
}
