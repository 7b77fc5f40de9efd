use std::f32::consts::TAU;

use serde::{Deserialize, Serialize};

use super::keypoints::Keypoint;
use super::scale_space::GaussianPyramid;

pub const DESCRIPTOR_LEN: usize = 128;
const CELLS: usize = 4;
const ORI_BINS: usize = 8;
/// Side of the sampled window, in octave pixels.
const WINDOW: usize = 16;
const WINDOW_SIGMA: f32 = 8.0;
const CLAMP: f32 = 0.2;

/// A unit-length 128-d gradient histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub vector: Vec<f32>,
    pub origin: Keypoint,
}

/// Why a keypoint produced no descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescriptorSkip {
    RegionOutOfBounds,
    ZeroGradient,
}

/// Samples the 16×16 window around `k`, rotated to its orientation (gradients
/// taken on the bilinearly interpolated layer), into
/// 4×4 cells of 8 orientation bins with trilinear interpolation.
///
/// The vector is normalized, clamped at 0.2 and normalized again.
pub fn extract_descriptor(k: &Keypoint, g: &GaussianPyramid) -> Result<Descriptor, DescriptorSkip> {
    let layer = g.layer(k.octave, k.scale_index);
    let (w, h) = (layer.width() as isize, layer.height() as isize);
    let (sin, cos) = k.orientation.sin_cos();
    let half = WINDOW as f32 / 2.0 - 0.5;
    let denom = 2.0 * WINDOW_SIGMA * WINDOW_SIGMA;

    let mut hist = [0f32; DESCRIPTOR_LEN];
    for i in 0..WINDOW {
        let v = i as f32 - half;
        for j in 0..WINDOW {
            let u = j as f32 - half;
            let px = k.x as f32 + u * cos - v * sin;
            let py = k.y as f32 + u * sin + v * cos;
            if px < 1.0 || py < 1.0 || px > (w - 2) as f32 || py > (h - 2) as f32 {
                return Err(DescriptorSkip::RegionOutOfBounds);
            }
            let (mag, ori) = layer.gradient_at(px, py);
            if mag == 0.0 {
                continue;
            }
            let weight = (-(u * u + v * v) / denom).exp() * mag;
            let rel = (ori - k.orientation).rem_euclid(TAU);

            let rb = (i as f32 + 0.5) / (WINDOW / CELLS) as f32 - 0.5;
            let cb = (j as f32 + 0.5) / (WINDOW / CELLS) as f32 - 0.5;
            let ob = rel * ORI_BINS as f32 / TAU;
            accumulate(&mut hist, rb, cb, ob, weight);
        }
    }

    if !normalize(&mut hist) {
        return Err(DescriptorSkip::ZeroGradient);
    }
    for v in hist.iter_mut() {
        *v = v.min(CLAMP);
    }
    normalize(&mut hist);
    Ok(Descriptor {
        vector: hist.to_vec(),
        origin: k.clone(),
    })
}

fn accumulate(hist: &mut [f32; DESCRIPTOR_LEN], rb: f32, cb: f32, ob: f32, weight: f32) {
    let (r0, c0, o0) = (rb.floor(), cb.floor(), ob.floor());
    let (dr, dc, d_o) = (rb - r0, cb - c0, ob - o0);
    for (ri, rw) in [(r0 as isize, 1.0 - dr), (r0 as isize + 1, dr)] {
        if ri < 0 || ri >= CELLS as isize {
            continue;
        }
        for (ci, cw) in [(c0 as isize, 1.0 - dc), (c0 as isize + 1, dc)] {
            if ci < 0 || ci >= CELLS as isize {
                continue;
            }
            for (oi, ow) in [(o0 as isize, 1.0 - d_o), (o0 as isize + 1, d_o)] {
                let oi = oi.rem_euclid(ORI_BINS as isize) as usize;
                let idx = (ri as usize * CELLS + ci as usize) * ORI_BINS + oi;
                hist[idx] += weight * rw * cw * ow;
            }
        }
    }
}

/// Scales to unit length in `f64`; returns false for a zero vector.
fn normalize(v: &mut [f32]) -> bool {
    let norm = v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    for x in v.iter_mut() {
        *x = (*x as f64 / norm) as f32;
    }
    true
}
