use std::path::Path;

use crate::error::{invalid, Result};

/// Boolean per-pixel map; `true` marks a pixel detected (or known) as forged.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoverageMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl CoverageMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
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

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    /// Sets every pixel whose integer offset from `center` satisfies
    /// `dx^2 + dy^2 <= radius^2`, clipped to the mask.
    pub fn paint_disk(&mut self, center: (i64, i64), radius: f64) {
        let reach = radius.floor() as i64;
        let r2 = radius * radius;
        for dy in -reach..=reach {
            let y = center.1 + dy;
            if y < 0 || y >= self.height as i64 {
                continue;
            }
            for dx in -reach..=reach {
                let x = center.0 + dx;
                if x < 0 || x >= self.width as i64 || ((dx * dx + dy * dy) as f64) > r2 {
                    continue;
                }
                self.data[y as usize * self.width + x as usize] = true;
            }
        }
    }

    pub fn union_with(&mut self, other: &CoverageMask) -> Result<()> {
        if self.dimensions() != other.dimensions() {
            return Err(invalid("mask dimensions differ"));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a |= *b;
        }
        Ok(())
    }

    pub fn to_luma8(&self) -> image::GrayImage {
        image::GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            image::Luma([if self.get(x as usize, y as usize) { 255 } else { 0 }])
        })
    }

    /// Pixels with value >= 128 are set.
    pub fn from_luma8(img: &image::GrayImage) -> Self {
        let (w, h) = img.dimensions();
        Self::from_fn(w as usize, h as usize, |x, y| img.get_pixel(x as u32, y as u32)[0] >= 128)
    }

    /// Writes an 8-bit PNG: 255 set, 0 clear.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_luma8()
            .save_with_format(path.as_ref(), image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::ImageReader::open(path.as_ref())
            .map_err(image::ImageError::IoError)?
            .with_guessed_format()
            .map_err(image::ImageError::IoError)?
            .decode()?;
        Ok(Self::from_luma8(&img.to_luma8()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_disks() {
        let mut m = CoverageMask::new(10, 10);
        m.paint_disk((5, 5), 1.5);
        assert_eq!(m.count(), 9);
        let mut m = CoverageMask::new(10, 10);
        m.paint_disk((0, 0), 1.5);
        assert_eq!(m.count(), 4);
        m.paint_disk((0, 0), 1.5);
        assert_eq!(m.count(), 4);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let m = CoverageMask::from_fn(7, 5, |x, y| (x + y) % 3 == 0);
        m.save_png(&p).unwrap();
        assert_eq!(CoverageMask::load_png(&p).unwrap(), m);
    }
}
