//! Fast-Hessian detection with box filters over an integral image.

use std::f32::consts::{PI, TAU};

use super::{dedupe, Keypoint, KeypointKind};
use crate::error::{invalid, Result};
use crate::imgcore::IntegralImage;

const LAYERS_PER_OCTAVE: usize = 4;
const DXY_WEIGHT: f64 = 0.9;

/// Determinant-of-Hessian approximation sampled every `step` pixels.
/// Positions where the filter does not fit inside the image hold 0.
#[derive(Clone, Debug)]
pub struct HessianResponse {
    pub width: usize,
    pub height: usize,
    pub step: usize,
    pub filter_size: usize,
    pub image_width: usize,
    pub image_height: usize,
    pub det: Vec<f32>,
}

impl HessianResponse {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.det[j * self.width + i]
    }

    /// Grid range `[lo, hi)` (in samples) where the filter fits.
    fn valid_range(&self, extent: usize) -> (usize, usize) {
        let half = self.filter_size / 2;
        let lo = half.div_ceil(self.step);
        let hi = if extent > half {
            (extent - 1 - half) / self.step + 1
        } else {
            0
        };
        (lo, hi.max(lo))
    }
}

/// Filter sizes of octave `o`: 9,15,21,27 then 15,27,39,51 then 27,51,75,99 ...
pub fn octave_filter_sizes(octave: usize) -> [usize; LAYERS_PER_OCTAVE] {
    let inc = 6usize << octave;
    let first = if octave == 0 {
        9
    } else {
        octave_filter_sizes(octave - 1)[1]
    };
    std::array::from_fn(|k| first + k * inc)
}

pub fn hessian_response(ii: &IntegralImage, filter_size: usize) -> Result<HessianResponse> {
    if filter_size < 9 || filter_size.is_multiple_of(2) || !filter_size.is_multiple_of(3) {
        return Err(invalid(format!(
            "filter size {filter_size} must be an odd multiple of 3, at least 9"
        )));
    }
    if filter_size > ii.width() || filter_size > ii.height() {
        return Err(invalid(format!(
            "filter size {filter_size} exceeds image {}x{}",
            ii.width(),
            ii.height()
        )));
    }
    Ok(hessian_layer(ii, filter_size, 1))
}

fn hessian_layer(ii: &IntegralImage, size: usize, step: usize) -> HessianResponse {
    let (w, h) = (ii.width(), ii.height());
    let gw = (w - 1) / step + 1;
    let gh = (h - 1) / step + 1;
    let mut resp = HessianResponse {
        width: gw,
        height: gh,
        step,
        filter_size: size,
        image_width: w,
        image_height: h,
        det: vec![0.0; gw * gh],
    };
    if size > w || size > h {
        return resp;
    }
    let (ilo, ihi) = resp.valid_range(w);
    let (jlo, jhi) = resp.valid_range(h);
    let l = size / 3;
    let half = size / 2;
    let inv_area = 1.0 / (size * size) as f64;
    for j in jlo..jhi {
        let cy = j * step;
        for i in ilo..ihi {
            let cx = i * step;
            let (x0, y0) = (cx - half, cy - half);
            let band = l - 1;
            let dxx = ii.rect_sum(x0, cy - band, x0 + l, cy + band + 1)
                - 2.0 * ii.rect_sum(x0 + l, cy - band, x0 + 2 * l, cy + band + 1)
                + ii.rect_sum(x0 + 2 * l, cy - band, x0 + 3 * l, cy + band + 1);
            let dyy = ii.rect_sum(cx - band, y0, cx + band + 1, y0 + l)
                - 2.0 * ii.rect_sum(cx - band, y0 + l, cx + band + 1, y0 + 2 * l)
                + ii.rect_sum(cx - band, y0 + 2 * l, cx + band + 1, y0 + 3 * l);
            let dxy = ii.rect_sum(cx - l, cy - l, cx, cy) + ii.rect_sum(cx + 1, cy + 1, cx + 1 + l, cy + 1 + l)
                - ii.rect_sum(cx + 1, cy - l, cx + 1 + l, cy)
                - ii.rect_sum(cx - l, cy + 1, cx, cy + 1 + l);
            let (dxx, dyy, dxy) = (dxx * inv_area, dyy * inv_area, dxy * inv_area);
            let det = dxx * dyy - (DXY_WEIGHT * dxy).powi(2);
            resp.det[j * gw + i] = det as f32;
        }
    }
    resp
}

/// Scale-space maxima of the Hessian determinant over `octaves` octaves of
/// four filter sizes each, with dominant Haar orientations.
pub fn detect_surf(ii: &IntegralImage, octaves: usize, response_thresh: f32) -> Vec<Keypoint> {
    let mut candidates = Vec::new();
    for o in 0..octaves {
        let sizes = octave_filter_sizes(o);
        if sizes[LAYERS_PER_OCTAVE - 1] > ii.width().min(ii.height()) {
            break;
        }
        let step = 1usize << o;
        let layers: Vec<HessianResponse> =
            sizes.iter().map(|&s| hessian_layer(ii, s, step)).collect();
        for m in 1..LAYERS_PER_OCTAVE - 1 {
            find_maxima(&layers, m, o, response_thresh, &mut candidates);
        }
    }
    let kept = dedupe(candidates);
    kept.into_iter()
        .map(|kp| Keypoint {
            orientation: dominant_orientation(ii, &kp),
            ..kp
        })
        .collect()
}

fn find_maxima(
    layers: &[HessianResponse],
    m: usize,
    octave: usize,
    thresh: f32,
    out: &mut Vec<Keypoint>,
) {
    let (below, cur, above) = (&layers[m - 1], &layers[m], &layers[m + 1]);
    let (ilo, ihi) = above.valid_range(cur.image_width);
    let (jlo, jhi) = above.valid_range(cur.image_height);
    if ihi < ilo + 3 || jhi < jlo + 3 {
        return;
    }
    let inc = (layers[1].filter_size - layers[0].filter_size) as f64;
    for j in jlo + 1..jhi - 1 {
        for i in ilo + 1..ihi - 1 {
            let v = cur.get(i, j);
            if v <= thresh {
                continue;
            }
            let mut is_max = true;
            'scan: for (li, layer) in [below, cur, above].iter().enumerate() {
                for jj in j - 1..=j + 1 {
                    for ii_ in i - 1..=i + 1 {
                        if li == 1 && ii_ == i && jj == j {
                            continue;
                        }
                        if layer.get(ii_, jj) >= v {
                            is_max = false;
                            break 'scan;
                        }
                    }
                }
            }
            if !is_max {
                continue;
            }
            let d = |l: &HessianResponse, di: i64, dj: i64| {
                l.get((i as i64 + di) as usize, (j as i64 + dj) as usize) as f64
            };
            let vv = v as f64;
            let g = nalgebra::Vector3::new(
                (d(cur, 1, 0) - d(cur, -1, 0)) * 0.5,
                (d(cur, 0, 1) - d(cur, 0, -1)) * 0.5,
                (d(above, 0, 0) - d(below, 0, 0)) * 0.5,
            );
            let dxx = d(cur, 1, 0) + d(cur, -1, 0) - 2.0 * vv;
            let dyy = d(cur, 0, 1) + d(cur, 0, -1) - 2.0 * vv;
            let dss = d(above, 0, 0) + d(below, 0, 0) - 2.0 * vv;
            let dxy = (d(cur, 1, 1) - d(cur, -1, 1) - d(cur, 1, -1) + d(cur, -1, -1)) * 0.25;
            let dxs = (d(above, 1, 0) - d(above, -1, 0) - d(below, 1, 0) + d(below, -1, 0)) * 0.25;
            let dys = (d(above, 0, 1) - d(above, 0, -1) - d(below, 0, 1) + d(below, 0, -1)) * 0.25;
            let hess = nalgebra::Matrix3::new(dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss);
            let Some(inv) = hess.try_inverse() else {
                continue;
            };
            let off = -(inv * g);
            if off.iter().any(|c| !c.is_finite() || c.abs() > 1.0) {
                continue;
            }
            let step = cur.step as f64;
            let size = cur.filter_size as f64 + off[2] * inc;
            out.push(Keypoint {
                x: ((i as f64 + off[0]) * step) as f32,
                y: ((j as f64 + off[1]) * step) as f32,
                scale: (1.2 * size / 9.0) as f32,
                orientation: 0.0,
                response: v,
                kind: KeypointKind::Lpsd,
                octave,
                layer: m,
            });
        }
    }
}

/// Haar responses `(dx, dy)` of side `side` (even) centered at pixel `(x, y)`.
#[inline]
pub(crate) fn haar(ii: &IntegralImage, x: i64, y: i64, side: i64) -> Option<(f64, f64)> {
    let half = side / 2;
    if x - half < 0 || y - half < 0 || x + half > ii.width() as i64 || y + half > ii.height() as i64 {
        return None;
    }
    let (x0, y0, x1, y1) = (
        (x - half) as usize,
        (y - half) as usize,
        (x + half) as usize,
        (y + half) as usize,
    );
    let (xm, ym) = (x as usize, y as usize);
    let dx = ii.rect_sum(xm, y0, x1, y1) - ii.rect_sum(x0, y0, xm, y1);
    let dy = ii.rect_sum(x0, ym, x1, y1) - ii.rect_sum(x0, y0, x1, ym);
    Some((dx, dy))
}

/// Sliding 60 degree window over Gaussian-weighted Haar responses within
/// radius `6 s`; the window with the longest summed vector wins.
fn dominant_orientation(ii: &IntegralImage, kp: &Keypoint) -> f32 {
    let s = kp.scale as f64;
    let side = (2.0 * (2.0 * s).round()).max(2.0) as i64;
    let sigma = 2.5;
    let mut samples: Vec<(f32, f64, f64)> = Vec::with_capacity(113);
    for j in -6i64..=6 {
        for i in -6i64..=6 {
            if i * i + j * j > 36 {
                continue;
            }
            let px = (kp.x as f64 + i as f64 * s).round() as i64;
            let py = (kp.y as f64 + j as f64 * s).round() as i64;
            if let Some((dx, dy)) = haar(ii, px, py, side) {
                let w = (-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp();
                let (dx, dy) = (dx * w, dy * w);
                if dx == 0.0 && dy == 0.0 {
                    continue;
                }
                let a = (dy.atan2(dx) as f32).rem_euclid(TAU);
                samples.push((a, dx, dy));
            }
        }
    }
    let window = PI / 3.0;
    let mut best = (0.0f64, 0.0f32);
    for k in 0..72 {
        let start = k as f32 * (TAU / 72.0);
        let (mut sx, mut sy) = (0.0, 0.0);
        for &(a, dx, dy) in &samples {
            let rel = (a - start).rem_euclid(TAU);
            if rel < window {
                sx += dx;
                sy += dy;
            }
        }
        let norm = sx * sx + sy * sy;
        if norm > best.0 {
            best = (norm, (sy.atan2(sx) as f32).rem_euclid(TAU));
        }
    }
    if best.1 >= TAU {
        0.0
    } else {
        best.1
    }
}
