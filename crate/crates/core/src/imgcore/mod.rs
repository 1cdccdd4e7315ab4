//! Rasters, grayscale decoding, Gaussian scale space, integral images and
//! circular disk sampling.

mod disk;
mod integral;
mod scale_space;

use std::ops::Deref;
use std::path::Path;

use image::DynamicImage;

use crate::error::{invalid, Result};

pub use disk::{sample_disk, DiskPixel, DiskSample};
pub use integral::{integral, IntegralImage};
pub use scale_space::{
    build_scale_space, default_octaves, gaussian_blur, gaussian_kernel, Level, Octave, ScaleSpace,
    ScaleSpaceParams,
};

/// Row-major single channel floating point raster with no value constraints.
///
/// Used for blurred levels and difference-of-Gaussian layers; [`GrayImage`]
/// is the validated luminance variant.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Raster {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(invalid(format!(
                "raster data has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
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
    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f32) {
        self.data[y * self.width + x] = value;
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[f32] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Whether `(x, y)` lies in the bilinear domain `[0, w-1] x [0, h-1]`.
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }

    /// Bilinear interpolation; `None` outside the pixel-center domain.
    /// Integer coordinates return the stored pixel exactly.
    #[inline]
    pub fn bilinear(&self, x: f64, y: f64) -> Option<f32> {
        if !self.contains(x, y) {
            return None;
        }
        Some(self.bilinear_unchecked(x, y))
    }

    /// Bilinear interpolation with coordinates clamped into the image.
    #[inline]
    pub fn bilinear_clamped(&self, x: f64, y: f64) -> f32 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        self.bilinear_unchecked(x, y)
    }

    #[inline]
    fn bilinear_unchecked(&self, x: f64, y: f64) -> f32 {
        let (x0, fx) = split_coord(x, self.width);
        let (y0, fy) = split_coord(y, self.height);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let top = lerp(self.get(x0, y0), self.get(x1, y0), fx);
        let bottom = lerp(self.get(x0, y1), self.get(x1, y1), fx);
        lerp(top, bottom, fy)
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &Raster) -> Raster {
        assert_eq!(self.dimensions(), other.dimensions());
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Raster {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Keeps every second pixel in both directions, starting at (0, 0).
    pub fn downsample2(&self) -> Raster {
        let width = self.width / 2;
        let height = self.height / 2;
        Raster::from_fn(width, height, |x, y| self.get(2 * x, 2 * y))
    }
}

#[inline]
fn split_coord(v: f64, len: usize) -> (usize, f32) {
    if len < 2 {
        return (0, 0.0);
    }
    let base = (v.floor() as usize).min(len - 2);
    (base, (v - base as f64) as f32)
}

#[inline]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    if t == 0.0 {
        a
    } else {
        (1.0 - t) * a + t * b
    }
}

/// A luminance raster with values in `[0, 255]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage(Raster);

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid("image has a zero dimension"));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 255.0) {
            return Err(invalid(format!("pixel value {v} outside [0, 255]")));
        }
        Raster::new(width, height, data).map(Self)
    }

    /// Wraps a raster, clamping into `[0, 255]` and mapping non-finite values to 0.
    pub fn from_raster_clamped(mut raster: Raster) -> Self {
        for v in raster.data_mut() {
            *v = if v.is_finite() { v.clamp(0.0, 255.0) } else { 0.0 };
        }
        Self(raster)
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self::from_raster_clamped(Raster {
            width,
            height,
            data: vec![value; width * height],
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl FnMut(usize, usize) -> f32) -> Self {
        Self::from_raster_clamped(Raster::from_fn(width, height, f))
    }

    pub fn from_dynamic(img: &DynamicImage) -> Result<Self> {
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        if w == 0 || h == 0 {
            return Err(invalid("image has a zero dimension"));
        }
        let data = rgb
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0;
                (0.299 * r as f32 + 0.587 * g as f32 + 0.114 * b as f32).clamp(0.0, 255.0)
            })
            .collect();
        Ok(Self(Raster {
            width: w as usize,
            height: h as usize,
            data,
        }))
    }

    pub fn raster(&self) -> &Raster {
        &self.0
    }

    pub fn into_raster(self) -> Raster {
        self.0
    }

    /// Rounds every pixel to the nearest integer gray level.
    pub fn quantized(&self) -> Self {
        let mut r = self.0.clone();
        for v in r.data_mut() {
            *v = v.round();
        }
        Self(r)
    }

    pub fn to_luma8(&self) -> image::GrayImage {
        let data = self.0.data.iter().map(|v| v.round() as u8).collect();
        image::GrayImage::from_raw(self.0.width as u32, self.0.height as u32, data)
            .expect("dimensions match data length")
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_luma8()
            .save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }
}

impl Deref for GrayImage {
    type Target = Raster;

    fn deref(&self) -> &Raster {
        &self.0
    }
}

/// Decodes a PNG, JPEG or BMP file into ITU-R 601 luminance.
pub fn load_grayscale(path: impl AsRef<Path>) -> Result<GrayImage> {
    let img = image::ImageReader::open(path.as_ref())
        .map_err(image::ImageError::IoError)?
        .with_guessed_format()
        .map_err(image::ImageError::IoError)?
        .decode()?;
    GrayImage::from_dynamic(&img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    fn write_rgb(dir: &Path, name: &str, w: u32, h: u32, px: [u8; 3]) -> std::path::PathBuf {
        let path = dir.join(name);
        RgbImage::from_pixel(w, h, Rgb(px)).save(&path).unwrap();
        path
    }

    #[test]
    fn white_png_is_255() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_rgb(dir.path(), "white.png", 4, 4, [255, 255, 255]);
        let img = load_grayscale(&path).unwrap();
        assert_eq!(img.dimensions(), (4, 4));
        assert!(img.data().iter().all(|&v| (v - 255.0).abs() < 1e-3));
    }

    #[test]
    fn red_png_uses_601_weights() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_rgb(dir.path(), "red.png", 3, 2, [255, 0, 0]);
        let img = load_grayscale(&path).unwrap();
        assert!(img.data().iter().all(|&v| (v - 76.245).abs() < 1e-4));
    }

    #[test]
    fn bmp_and_jpeg_decode() {
        let dir = tempfile::tempdir().unwrap();
        let bmp = write_rgb(dir.path(), "g.bmp", 5, 5, [10, 10, 10]);
        assert!((load_grayscale(&bmp).unwrap().get(2, 2) - 10.0).abs() < 1e-3);
        let jpg = write_rgb(dir.path(), "g.jpg", 16, 16, [128, 128, 128]);
        assert!((load_grayscale(&jpg).unwrap().get(8, 8) - 128.0).abs() < 2.0);
    }

    #[test]
    fn truncated_file_is_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_rgb(dir.path(), "t.png", 32, 32, [1, 2, 3]);
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 3]).unwrap();
        assert!(matches!(
            load_grayscale(&path),
            Err(crate::Error::Decode(_))
        ));
    }

    #[test]
    fn missing_file_is_decode_error() {
        assert!(matches!(
            load_grayscale("/nonexistent/x.png"),
            Err(crate::Error::Decode(_))
        ));
    }

    #[test]
    fn gray_image_rejects_bad_values() {
        assert!(GrayImage::new(0, 3, vec![]).is_err());
        assert!(GrayImage::new(1, 1, vec![256.0]).is_err());
        assert!(GrayImage::new(1, 1, vec![f32::NAN]).is_err());
        assert!(GrayImage::new(2, 1, vec![0.0]).is_err());
        assert!(GrayImage::new(1, 1, vec![12.5]).is_ok());
    }

    #[test]
    fn bilinear_is_exact_on_grid_and_interpolates_between() {
        let r = Raster::from_fn(3, 2, |x, y| (x + 10 * y) as f32);
        assert_eq!(r.bilinear(2.0, 1.0), Some(12.0));
        assert_eq!(r.bilinear(0.0, 0.0), Some(0.0));
        assert!((r.bilinear(0.5, 0.5).unwrap() - 5.5).abs() < 1e-6);
        assert_eq!(r.bilinear(2.01, 0.0), None);
        assert_eq!(r.bilinear_clamped(9.0, -3.0), 2.0);
    }

    #[test]
    fn downsample_halves() {
        let r = Raster::from_fn(8, 6, |x, y| (x * y) as f32);
        let d = r.downsample2();
        assert_eq!(d.dimensions(), (4, 3));
        assert_eq!(d.get(3, 2), 24.0);
    }
}
