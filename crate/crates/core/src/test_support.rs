//! Synthetic images shared by unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::imgcore::{gaussian_blur, GrayImage, Raster};

/// Blurred uniform noise stretched to `[20, 235]`.
pub fn smooth_noise(width: usize, height: usize, sigma: f32, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = Raster::from_fn(width, height, |_, _| rng.random_range(0.0..255.0));
    let blurred = gaussian_blur(&raw, sigma);
    let (lo, hi) = blurred
        .data()
        .iter()
        .fold((f32::MAX, f32::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = (hi - lo).max(1e-6);
    GrayImage::from_fn(width, height, |x, y| 20.0 + 215.0 * (blurred.get(x, y) - lo) / span)
}

/// Content rotated by `angle` radians about the image center (x right, y
/// down), bilinear with edge clamping.
pub fn rotate_about_center(img: &GrayImage, angle: f64) -> GrayImage {
    let (w, h) = img.dimensions();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (s, c) = angle.sin_cos();
    GrayImage::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        img.bilinear_clamped(cx + c * dx + s * dy, cy - s * dx + c * dy)
    })
}

pub fn add_noise(img: &GrayImage, std: f32, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, std).unwrap();
    let (w, h) = img.dimensions();
    GrayImage::from_fn(w, h, |x, y| (img.get(x, y) + normal.sample(&mut rng)).clamp(0.0, 255.0))
}
