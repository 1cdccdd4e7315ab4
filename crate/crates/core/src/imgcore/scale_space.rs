use super::Raster;
use crate::error::{invalid, Result};

/// Normalized Gaussian taps truncated at `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let denom = 2.0 * sigma * sigma;
    let mut taps: Vec<f32> = (0..=2 * radius)
        .map(|i| {
            let d = i as f32 - radius as f32;
            (-d * d / denom).exp()
        })
        .collect();
    let sum: f32 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_blur(src: &Raster, sigma: f32) -> Raster {
    if sigma <= 0.0 {
        return src.clone();
    }
    let taps = gaussian_kernel(sigma);
    let r = taps.len() / 2;
    let (w, h) = src.dimensions();

    let mut horiz = Raster::zeros(w, h);
    let mut padded = vec![0.0f32; w + 2 * r];
    for y in 0..h {
        let row = src.row(y);
        padded[..r].fill(row[0]);
        padded[r..r + w].copy_from_slice(row);
        padded[r + w..].fill(row[w - 1]);
        let out = &mut horiz.data_mut()[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            *o = padded[x..x + taps.len()]
                .iter()
                .zip(&taps)
                .map(|(a, b)| a * b)
                .sum();
        }
    }

    let mut out = Raster::zeros(w, h);
    let mut acc = vec![0.0f32; w];
    for y in 0..h {
        acc.fill(0.0);
        for (k, &t) in taps.iter().enumerate() {
            let sy = (y + k).saturating_sub(r).min(h - 1);
            for (a, v) in acc.iter_mut().zip(horiz.row(sy)) {
                *a += t * v;
            }
        }
        out.data_mut()[y * w..(y + 1) * w].copy_from_slice(&acc);
    }
    out
}

/// Pyramid depth used when the caller does not pick one:
/// `min(4, floor(log2(min_dim / 16)))`, at least 1.
pub fn default_octaves(width: usize, height: usize) -> usize {
    let min_dim = width.min(height) as f64;
    let depth = (min_dim / 16.0).log2().floor();
    if depth.is_finite() {
        (depth as i64).clamp(1, 4) as usize
    } else {
        1
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleSpaceParams {
    pub octaves: usize,
    pub scales_per_octave: usize,
    /// Blur of the first level of every octave, in that octave's pixels.
    pub base_sigma: f32,
    /// Blur assumed to be already present in the input image.
    pub assumed_blur: f32,
}

impl ScaleSpaceParams {
    pub fn new(octaves: usize, scales_per_octave: usize) -> Self {
        Self {
            octaves,
            scales_per_octave,
            base_sigma: 1.6,
            assumed_blur: 0.5,
        }
    }

    pub fn for_image(width: usize, height: usize) -> Self {
        Self::new(default_octaves(width, height), 3)
    }
}

/// One blurred level; `sigma` is expressed in the octave's own pixel units.
#[derive(Clone, Debug)]
pub struct Level {
    pub sigma: f32,
    pub raster: Raster,
}

#[derive(Clone, Debug)]
pub struct Octave {
    /// Factor between this octave's pixels and input pixels.
    pub subsample: usize,
    pub levels: Vec<Level>,
    pub dogs: Vec<Raster>,
}

/// Gaussian pyramid with its difference-of-Gaussian layers.
#[derive(Clone, Debug)]
pub struct ScaleSpace {
    params: ScaleSpaceParams,
    k: f32,
    octaves: Vec<Octave>,
}

impl ScaleSpace {
    pub fn build(img: &Raster, params: ScaleSpaceParams) -> Result<Self> {
        let ScaleSpaceParams {
            octaves,
            scales_per_octave: s,
            base_sigma,
            assumed_blur,
        } = params;
        if octaves == 0 || s == 0 {
            return Err(invalid("scale space needs at least one octave and one scale"));
        }
        let min_dim = img.width().min(img.height());
        let needed = (1usize << octaves.min(30)) * 8;
        if min_dim < needed {
            return Err(invalid(format!(
                "image min dimension {min_dim} too small for {octaves} octaves (need {needed})"
            )));
        }

        let k = 2f32.powf(1.0 / s as f32);
        let sigmas: Vec<f32> = (0..s + 3).map(|i| base_sigma * k.powi(i as i32)).collect();
        let increments: Vec<f32> = sigmas
            .windows(2)
            .map(|w| (w[1] * w[1] - w[0] * w[0]).sqrt())
            .collect();

        let mut out = Vec::with_capacity(octaves);
        let initial = (base_sigma * base_sigma - assumed_blur * assumed_blur)
            .max(0.01)
            .sqrt();
        let mut base = gaussian_blur(img, initial);
        for o in 0..octaves {
            let mut levels = Vec::with_capacity(s + 3);
            levels.push(Level {
                sigma: sigmas[0],
                raster: base,
            });
            for (i, inc) in increments.iter().enumerate() {
                let next = gaussian_blur(&levels[i].raster, *inc);
                levels.push(Level {
                    sigma: sigmas[i + 1],
                    raster: next,
                });
            }
            let dogs = levels
                .windows(2)
                .map(|w| w[1].raster.sub(&w[0].raster))
                .collect();
            // level s carries twice the base blur: it seeds the next octave
            base = levels[s].raster.downsample2();
            out.push(Octave {
                subsample: 1 << o,
                levels,
                dogs,
            });
        }
        Ok(Self {
            params,
            k,
            octaves: out,
        })
    }

    pub fn params(&self) -> &ScaleSpaceParams {
        &self.params
    }

    /// Constant ratio between consecutive level blurs.
    pub fn k(&self) -> f32 {
        self.k
    }

    pub fn octaves(&self) -> &[Octave] {
        &self.octaves
    }

    /// Absolute blur (input pixels) of a fractional layer position in an octave.
    pub fn absolute_sigma(&self, octave: usize, layer: f32) -> f32 {
        let s = self.params.scales_per_octave as f32;
        self.params.base_sigma * 2f32.powf(layer / s) * (1usize << octave) as f32
    }
}

pub fn build_scale_space(
    img: &Raster,
    octaves: usize,
    scales_per_octave: usize,
) -> Result<ScaleSpace> {
    ScaleSpace::build(img, ScaleSpaceParams::new(octaves, scales_per_octave))
}
