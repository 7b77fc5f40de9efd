use image::{DynamicImage, ImageReader, RgbImage};
use serde::{Deserialize, Serialize};
use std::io::Cursor;

use super::FeatureError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChannelTag {
    R,
    G,
    B,
}

impl ChannelTag {
    pub const ALL: [ChannelTag; 3] = [ChannelTag::R, ChannelTag::G, ChannelTag::B];

    pub fn index(self) -> usize {
        match self {
            ChannelTag::R => 0,
            ChannelTag::G => 1,
            ChannelTag::B => 2,
        }
    }
}

/// A row-major grid of `f32` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height, "plane data length mismatch");
        Plane { width, height, data }
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Plane::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Keeps every other pixel in both directions.
    pub fn downsample(&self) -> Plane {
        let w = (self.width / 2).max(1);
        let h = (self.height / 2).max(1);
        Plane::from_fn(w, h, |x, y| self.get(2 * x, 2 * y))
    }

    /// Bilinear interpolation; `(x, y)` must lie within the grid.
    #[inline]
    pub fn sample(&self, x: f32, y: f32) -> f32 {
        let x0 = (x.floor() as usize).min(self.width - 1);
        let y0 = (y.floor() as usize).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (fx, fy) = (x - x0 as f32, y - y0 as f32);
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Central-difference gradient at a sub-pixel position, on the
    /// bilinearly interpolated surface. Requires a one pixel margin.
    #[inline]
    pub fn gradient_at(&self, x: f32, y: f32) -> (f32, f32) {
        let dx = self.sample(x + 1.0, y) - self.sample(x - 1.0, y);
        let dy = self.sample(x, y + 1.0) - self.sample(x, y - 1.0);
        polar(dx, dy)
    }

    /// Central-difference gradient `(magnitude, orientation)` with the
    /// orientation in `[0, 2π)`. Requires a one pixel margin.
    #[inline]
    pub fn gradient(&self, x: usize, y: usize) -> (f32, f32) {
        let dx = self.get(x + 1, y) - self.get(x - 1, y);
        let dy = self.get(x, y + 1) - self.get(x, y - 1);
        polar(dx, dy)
    }
}

#[inline]
fn polar(dx: f32, dy: f32) -> (f32, f32) {
    let mag = (dx * dx + dy * dy).sqrt();
    let mut ori = dy.atan2(dx);
    if ori < 0.0 {
        ori += std::f32::consts::TAU;
    }
    if ori >= std::f32::consts::TAU {
        ori -= std::f32::consts::TAU;
    }
    (mag, ori)
}

/// One colour channel of an image, intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageChannel {
    pub plane: Plane,
    pub tag: ChannelTag,
}

impl ImageChannel {
    pub fn new(width: usize, height: usize, values: Vec<f32>, tag: ChannelTag) -> Result<Self, FeatureError> {
        if values.len() != width * height {
            return Err(FeatureError::InvalidChannel(format!(
                "expected {} values for {width}x{height}, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(FeatureError::InvalidChannel(format!("intensity {v} outside [0, 1]")));
        }
        Ok(ImageChannel {
            plane: Plane::new(width, height, values),
            tag,
        })
    }

    pub fn width(&self) -> usize {
        self.plane.width()
    }

    pub fn height(&self) -> usize {
        self.plane.height()
    }
}

/// Decodes PNG/JPEG bytes to 8-bit RGB, compositing any alpha over white.
pub fn decode_rgb(bytes: &[u8]) -> Result<RgbImage, FeatureError> {
    let img = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| FeatureError::UndecodableImage(e.to_string()))?
        .decode()
        .map_err(|e| FeatureError::UndecodableImage(e.to_string()))?;
    Ok(flatten_over_white(img))
}

fn flatten_over_white(img: DynamicImage) -> RgbImage {
    if !img.color().has_alpha() {
        return img.to_rgb8();
    }
    let rgba = img.to_rgba8();
    let mut out = RgbImage::new(rgba.width(), rgba.height());
    for (src, dst) in rgba.pixels().zip(out.pixels_mut()) {
        let a = src[3] as u32;
        for c in 0..3 {
            let v = (src[c] as u32 * a + 255 * (255 - a) + 127) / 255;
            dst[c] = v as u8;
        }
    }
    out
}

/// Splits an RGB raster into three `[0, 1]` channels.
pub fn split_channels(img: &RgbImage) -> [ImageChannel; 3] {
    let (w, h) = (img.width() as usize, img.height() as usize);
    ChannelTag::ALL.map(|tag| {
        let c = tag.index();
        let values = img.pixels().map(|p| p[c] as f32 / 255.0).collect();
        ImageChannel {
            plane: Plane::new(w, h, values),
            tag,
        }
    })
}
