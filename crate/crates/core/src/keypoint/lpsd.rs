//! Log-polar SURF descriptor: the keypoint neighbourhood is resampled on a
//! log-polar grid aligned with the keypoint orientation, and SURF-style sums
//! of Haar differences along the radial and angular axes are pooled per cell.

use std::f64::consts::TAU;

use super::{normalize, Descriptor, Keypoint};
use crate::imgcore::{integral, GrayImage, IntegralImage};

const RADIAL_CELLS: usize = 4;
const ANGULAR_CELLS: usize = 4;
const RHO_PER_CELL: usize = 4;
const PHI_PER_CELL: usize = 8;
const RHO_SAMPLES: usize = RADIAL_CELLS * RHO_PER_CELL;
const PHI_SAMPLES: usize = ANGULAR_CELLS * PHI_PER_CELL;
/// Support radius in units of the keypoint scale.
const SUPPORT: f64 = 10.0;
/// Innermost ring radius relative to the support radius.
const INNER: f64 = 1.0 / 16.0;

pub const LPSD_LEN: usize = RADIAL_CELLS * ANGULAR_CELLS * 4;

pub fn describe_lpsd(kp: &Keypoint, img: &GrayImage) -> Option<Descriptor> {
    describe_lpsd_integral(kp, &integral(img.raster()))
}

/// Box-smoothed intensity at a subpixel position: bilinear blend of the box
/// means of the four surrounding pixels, coordinates clamped to the image.
fn smoothed(ii: &IntegralImage, x: f64, y: f64, side: i64) -> f64 {
    let x = x.clamp(0.0, (ii.width() - 1) as f64);
    let y = y.clamp(0.0, (ii.height() - 1) as f64);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let m = |dx: i64, dy: i64| ii.box_mean(x0 + dx, y0 + dy, side);
    let top = m(0, 0) * (1.0 - fx) + if fx > 0.0 { m(1, 0) * fx } else { 0.0 };
    let bottom = if fy > 0.0 {
        m(0, 1) * (1.0 - fx) + if fx > 0.0 { m(1, 1) * fx } else { 0.0 }
    } else {
        0.0
    };
    top * (1.0 - fy) + bottom * fy
}

/// Same as [`describe_lpsd`] with a precomputed integral image.
pub fn describe_lpsd_integral(kp: &Keypoint, ii: &IntegralImage) -> Option<Descriptor> {
    let (w, h) = (ii.width() as f64, ii.height() as f64);
    let (cx, cy) = (kp.x as f64, kp.y as f64);
    let scale = kp.scale as f64;
    if !(scale > 0.0) {
        return None;
    }
    let radius = SUPPORT * scale;
    // distance from the center to the image rectangle
    let dx = (0.0 - cx).max(cx - (w - 1.0)).max(0.0);
    let dy = (0.0 - cy).max(cy - (h - 1.0)).max(0.0);
    if dx * dx + dy * dy > radius * radius {
        return None;
    }

    let side = (scale.round() as i64).max(1) | 1;
    let ring = |k: usize| radius * INNER.powf(1.0 - (k as f64 + 0.5) / RHO_SAMPLES as f64);
    let mut grid = [[0.0f64; PHI_SAMPLES]; RHO_SAMPLES];
    let angles: Vec<(f64, f64)> = (0..PHI_SAMPLES)
        .map(|j| (kp.orientation as f64 + TAU * j as f64 / PHI_SAMPLES as f64).sin_cos())
        .collect();
    for (k, row) in grid.iter_mut().enumerate() {
        let r = ring(k);
        for (v, &(s, c)) in row.iter_mut().zip(&angles) {
            *v = smoothed(ii, cx + r * c, cy + r * s, side);
        }
    }

    let mut vector = vec![0.0f32; LPSD_LEN];
    let mut acc = [[0.0f64; 4]; RADIAL_CELLS * ANGULAR_CELLS];
    for k in 0..RHO_SAMPLES {
        let (lo, hi) = (k.saturating_sub(1), (k + 1).min(RHO_SAMPLES - 1));
        for j in 0..PHI_SAMPLES {
            let d_rho = (grid[hi][j] - grid[lo][j]) / (hi - lo) as f64;
            let d_phi = (grid[k][(j + 1) % PHI_SAMPLES]
                - grid[k][(j + PHI_SAMPLES - 1) % PHI_SAMPLES])
                * 0.5;
            let cell = &mut acc[(k / RHO_PER_CELL) * ANGULAR_CELLS + j / PHI_PER_CELL];
            cell[0] += d_rho;
            cell[1] += d_phi;
            cell[2] += d_rho.abs();
            cell[3] += d_phi.abs();
        }
    }
    for (out, cell) in vector.chunks_mut(4).zip(&acc) {
        for (o, v) in out.iter_mut().zip(cell) {
            *o = *v as f32;
        }
    }
    if !normalize(&mut vector) {
        return None;
    }
    Some(Descriptor {
        keypoint: *kp,
        vector,
    })
}
