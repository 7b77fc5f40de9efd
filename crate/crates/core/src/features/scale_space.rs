use serde::{Deserialize, Serialize};

use super::image::{ImageChannel, Plane};
use super::FeatureError;

/// Scale-space and detector parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSpaceParams {
    /// Scale of the first layer of every octave, in octave pixels.
    pub sigma0: f64,
    /// Number of scales per octave for which extrema are searched.
    pub scales_per_octave: usize,
    /// Fixed octave count; `None` derives it from the image size.
    pub octaves: Option<usize>,
    pub contrast_threshold: f64,
    /// Maximum ratio of principal curvatures for the edge test.
    pub edge_ratio_threshold: f64,
    /// Blur assumed to be already present in the input image.
    pub input_blur: f64,
}

impl Default for ScaleSpaceParams {
    fn default() -> Self {
        ScaleSpaceParams {
            sigma0: 1.6,
            scales_per_octave: 3,
            octaves: None,
            contrast_threshold: 0.03,
            edge_ratio_threshold: 10.0,
            input_blur: 0.5,
        }
    }
}

impl ScaleSpaceParams {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: &str| Err(FeatureError::InvalidParams(m.to_owned()));
        if !(self.sigma0 > 0.0) {
            return bad("sigma0 must be positive");
        }
        if self.scales_per_octave < 1 {
            return bad("scales_per_octave must be at least 1");
        }
        if self.octaves == Some(0) {
            return bad("octaves must be at least 1");
        }
        if !(self.contrast_threshold >= 0.0) {
            return bad("contrast_threshold must be non-negative");
        }
        if !(self.edge_ratio_threshold >= 1.0) {
            return bad("edge_ratio_threshold must be at least 1");
        }
        if !(self.input_blur >= 0.0) {
            return bad("input_blur must be non-negative");
        }
        Ok(())
    }

    /// Multiplicative step between adjacent scales, `2^(1/s)`.
    pub fn k(&self) -> f64 {
        2f64.powf(1.0 / self.scales_per_octave as f64)
    }

    /// `floor(log2(min(w, h))) - 2`, at least 1, unless fixed explicitly.
    pub fn octaves_for(&self, width: usize, height: usize) -> usize {
        if let Some(n) = self.octaves {
            return n;
        }
        let min = width.min(height).max(1);
        let log2 = usize::BITS - 1 - min.leading_zeros();
        (log2 as usize).saturating_sub(2).max(1)
    }

    /// Octave-relative scale of Gaussian layer `j`.
    pub fn layer_sigma(&self, j: usize) -> f64 {
        self.sigma0 * self.k().powi(j as i32)
    }

    pub fn layers_per_octave(&self) -> usize {
        self.scales_per_octave + 3
    }
}

/// Continuous 2-D Gaussian `G(x, y, σ)`.
pub fn gaussian_2d(x: f64, y: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    (-(x * x + y * y) / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2)
}

/// Unnormalized 1-D Gaussian taps for offsets `-r..=r`, `r = ceil(4σ)`.
fn kernel_1d(sigma: f64) -> Vec<f32> {
    let r = (4.0 * sigma).ceil().max(1.0) as i64;
    (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp() as f32)
        .collect()
}

/// Separable Gaussian blur. Taps falling outside the image are dropped and
/// the remaining weights renormalized, so borders are not darkened.
pub fn gaussian_blur(src: &Plane, sigma: f64) -> Plane {
    if sigma <= 0.0 {
        return src.clone();
    }
    let kernel = kernel_1d(sigma);
    let r = (kernel.len() / 2) as isize;
    let (w, h) = (src.width(), src.height());

    let pass = |get: &dyn Fn(usize, usize) -> f32, len: usize, other: usize, horizontal: bool| {
        let mut out = vec![0f32; w * h];
        for o in 0..other {
            for i in 0..len {
                let mut acc = 0f32;
                let mut wsum = 0f32;
                for (t, &k) in kernel.iter().enumerate() {
                    let j = i as isize + t as isize - r;
                    if j < 0 || j >= len as isize {
                        continue;
                    }
                    let v = if horizontal { get(j as usize, o) } else { get(o, j as usize) };
                    acc += k * v;
                    wsum += k;
                }
                let (x, y) = if horizontal { (i, o) } else { (o, i) };
                out[y * w + x] = acc / wsum;
            }
        }
        out
    };

    let tmp = Plane::new(w, h, pass(&|x, y| src.get(x, y), w, h, true));
    Plane::new(w, h, pass(&|x, y| tmp.get(x, y), h, w, false))
}

/// Per octave, `s + 3` progressively blurred layers `L(x, y, σ0·k^j)`.
#[derive(Debug, Clone)]
pub struct GaussianPyramid {
    pub octaves: Vec<Vec<Plane>>,
    pub params: ScaleSpaceParams,
}

impl GaussianPyramid {
    pub fn from_octaves(octaves: Vec<Vec<Plane>>, params: ScaleSpaceParams) -> Self {
        GaussianPyramid { octaves, params }
    }

    pub fn layer(&self, octave: usize, scale: usize) -> &Plane {
        &self.octaves[octave][scale]
    }
}

/// Per octave, `s + 2` difference layers `D = L(kσ) - L(σ)`.
#[derive(Debug, Clone)]
pub struct DogPyramid {
    pub octaves: Vec<Vec<Plane>>,
}

/// Builds the Gaussian scale space of one channel without initial upsampling.
pub fn build_scale_space(ch: &ImageChannel, p: &ScaleSpaceParams) -> Result<GaussianPyramid, FeatureError> {
    p.validate()?;
    let n_octaves = p.octaves_for(ch.width(), ch.height());
    let n_layers = p.layers_per_octave();
    let k2 = p.k() * p.k();

    let base_blur = (p.sigma0 * p.sigma0 - p.input_blur * p.input_blur).max(0.0).sqrt();
    let mut base = gaussian_blur(&ch.plane, base_blur);
    let mut octaves = Vec::with_capacity(n_octaves);
    for o in 0..n_octaves {
        let mut layers = Vec::with_capacity(n_layers);
        layers.push(base);
        for j in 1..n_layers {
            let prev = p.layer_sigma(j - 1);
            let inc = prev * (k2 - 1.0).sqrt();
            let next = gaussian_blur(&layers[j - 1], inc);
            layers.push(next);
        }
        if o + 1 < n_octaves {
            base = layers[p.scales_per_octave].downsample();
        } else {
            base = Plane::filled(1, 1, 0.0);
        }
        octaves.push(layers);
    }
    Ok(GaussianPyramid {
        octaves,
        params: p.clone(),
    })
}

pub fn compute_dog(g: &GaussianPyramid) -> DogPyramid {
    let octaves = g
        .octaves
        .iter()
        .map(|layers| {
            layers
                .windows(2)
                .map(|w| {
                    let data = w[1].data().iter().zip(w[0].data()).map(|(a, b)| a - b).collect();
                    Plane::new(w[0].width(), w[0].height(), data)
                })
                .collect()
        })
        .collect();
    DogPyramid { octaves }
}
