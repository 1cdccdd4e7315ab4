use super::GrayImage;
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiskPixel {
    pub dx: i32,
    pub dy: i32,
    pub value: f32,
}

/// Pixels of a circular domain around a (possibly subpixel) center.
///
/// Offsets are integers and satisfy `dx^2 + dy^2 <= radius^2`. Values are
/// bilinearly interpolated at `center + offset`, so integer centers read the
/// stored pixels exactly. Positions outside the image are skipped.
#[derive(Clone, Debug)]
pub struct DiskSample {
    pub center: (f64, f64),
    pub radius: f64,
    pub pixels: Vec<DiskPixel>,
    pub mean: f64,
    pub variance: f64,
}

pub fn sample_disk(img: &GrayImage, center: (f64, f64), radius: f64) -> Result<DiskSample> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(invalid(format!("disk radius must be positive, got {radius}")));
    }
    let (cx, cy) = center;
    if !img.contains(cx, cy) {
        return Err(invalid(format!("disk center ({cx}, {cy}) outside image")));
    }
    let reach = radius.floor() as i32;
    let r2 = radius * radius;
    let mut pixels = Vec::with_capacity(((2 * reach + 1) * (2 * reach + 1)) as usize);
    let (mut sum, mut sum2) = (0.0f64, 0.0f64);
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            if (dx * dx + dy * dy) as f64 > r2 {
                continue;
            }
            if let Some(value) = img.bilinear(cx + dx as f64, cy + dy as f64) {
                sum += value as f64;
                sum2 += (value as f64) * (value as f64);
                pixels.push(DiskPixel { dx, dy, value });
            }
        }
    }
    let n = pixels.len() as f64;
    let mean = sum / n;
    let variance = (sum2 / n - mean * mean).max(0.0);
    Ok(DiskSample {
        center,
        radius,
        pixels,
        mean,
        variance,
    })
}
