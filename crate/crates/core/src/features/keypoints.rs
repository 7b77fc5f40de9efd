use std::f32::consts::TAU;

use serde::{Deserialize, Serialize};

use super::scale_space::{DogPyramid, GaussianPyramid, ScaleSpaceParams};

pub const ORIENTATION_BINS: usize = 36;
/// Neighbourhood weighting scale relative to the keypoint scale.
const ORIENTATION_SIGMA_FACTOR: f64 = 1.5;
/// Histogram peaks at or above this fraction of the maximum spawn a keypoint.
const ORIENTATION_PEAK_RATIO: f32 = 0.8;

/// A scale-space extremum on the integer grid of its octave.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: usize,
    pub y: usize,
    pub octave: usize,
    /// Index of the DoG layer (equivalently the Gaussian layer) it was found in.
    pub scale_index: usize,
    /// Effective scale in input-image pixels.
    pub sigma: f64,
    /// Radians in `[0, 2π)`.
    pub orientation: f32,
    /// DoG value at the extremum.
    pub response: f32,
}

impl Keypoint {
    /// Octave-relative scale.
    pub fn octave_sigma(&self, p: &ScaleSpaceParams) -> f64 {
        p.layer_sigma(self.scale_index)
    }
}

/// 26-neighbour scale-space extrema that pass the contrast and edge tests.
pub fn detect_extrema(d: &DogPyramid, p: &ScaleSpaceParams) -> Vec<Keypoint> {
    let mut out = Vec::new();
    let r = p.edge_ratio_threshold;
    let edge_limit = ((r + 1.0) * (r + 1.0) / r) as f32;
    let threshold = p.contrast_threshold as f32;

    for (o, layers) in d.octaves.iter().enumerate() {
        if layers.len() < 3 {
            continue;
        }
        let (w, h) = (layers[0].width(), layers[0].height());
        if w < 3 || h < 3 {
            continue;
        }
        for l in 1..layers.len() - 1 {
            let (below, cur, above) = (&layers[l - 1], &layers[l], &layers[l + 1]);
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let v = cur.get(x, y);
                    if v.abs() < threshold {
                        continue;
                    }
                    if !is_strict_extremum(v, x, y, [below, cur, above]) {
                        continue;
                    }
                    let dxx = cur.get(x + 1, y) + cur.get(x - 1, y) - 2.0 * v;
                    let dyy = cur.get(x, y + 1) + cur.get(x, y - 1) - 2.0 * v;
                    let dxy = (cur.get(x + 1, y + 1) - cur.get(x + 1, y - 1) - cur.get(x - 1, y + 1)
                        + cur.get(x - 1, y - 1))
                        / 4.0;
                    let tr = dxx + dyy;
                    let det = dxx * dyy - dxy * dxy;
                    if det <= 0.0 || tr * tr / det >= edge_limit {
                        continue;
                    }
                    out.push(Keypoint {
                        x,
                        y,
                        octave: o,
                        scale_index: l,
                        sigma: p.layer_sigma(l) * (1u64 << o) as f64,
                        orientation: 0.0,
                        response: v,
                    });
                }
            }
        }
    }
    out
}

fn is_strict_extremum(v: f32, x: usize, y: usize, stack: [&super::image::Plane; 3]) -> bool {
    let mut is_max = true;
    let mut is_min = true;
    for (li, layer) in stack.iter().enumerate() {
        for ny in y - 1..=y + 1 {
            for nx in x - 1..=x + 1 {
                if li == 1 && nx == x && ny == y {
                    continue;
                }
                let n = layer.get(nx, ny);
                is_max &= v > n;
                is_min &= v < n;
                if !is_max && !is_min {
                    return false;
                }
            }
        }
    }
    is_max || is_min
}

/// One keypoint per orientation-histogram peak within 80% of the highest.
///
/// The histogram has 36 bins centred on multiples of 10°; each sample adds its
/// gradient magnitude weighted by a Gaussian of `1.5σ` over a radius of `3·1.5σ`.
pub fn assign_orientation(k: &Keypoint, g: &GaussianPyramid) -> Vec<Keypoint> {
    let layer = g.layer(k.octave, k.scale_index);
    let (w, h) = (layer.width(), layer.height());
    if k.x < 1 || k.y < 1 || k.x + 1 >= w || k.y + 1 >= h {
        return Vec::new();
    }
    let sigma = ORIENTATION_SIGMA_FACTOR * k.octave_sigma(&g.params);
    let radius = (3.0 * sigma).round() as isize;
    let denom = 2.0 * sigma * sigma;

    let mut hist = [0f32; ORIENTATION_BINS];
    for dy in -radius..=radius {
        let y = k.y as isize + dy;
        if y < 1 || y >= h as isize - 1 {
            continue;
        }
        for dx in -radius..=radius {
            let x = k.x as isize + dx;
            if x < 1 || x >= w as isize - 1 {
                continue;
            }
            let (mag, ori) = layer.gradient(x as usize, y as usize);
            if mag == 0.0 {
                continue;
            }
            let weight = (-((dx * dx + dy * dy) as f64) / denom).exp() as f32;
            let bin = (ori * ORIENTATION_BINS as f32 / TAU).round() as usize % ORIENTATION_BINS;
            hist[bin] += weight * mag;
        }
    }

    let max = hist.iter().cloned().fold(0f32, f32::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for b in 0..ORIENTATION_BINS {
        let left = hist[(b + ORIENTATION_BINS - 1) % ORIENTATION_BINS];
        let right = hist[(b + 1) % ORIENTATION_BINS];
        let v = hist[b];
        if v > left && v >= right && v >= ORIENTATION_PEAK_RATIO * max {
            out.push(Keypoint {
                orientation: b as f32 * TAU / ORIENTATION_BINS as f32,
                ..k.clone()
            });
        }
    }
    out
}
