//! DoG extrema detection, orientation assignment and the 4x4x8 gradient
//! histogram descriptor.

use std::f32::consts::TAU;

use super::{dedupe, normalize, Descriptor, Keypoint, KeypointKind};
use crate::error::{invalid, Result};
use crate::imgcore::{Raster, ScaleSpace};

const BORDER: usize = 5;
const MAX_INTERP_STEPS: usize = 5;
const ORI_BINS: usize = 36;
const ORI_PEAK_RATIO: f32 = 0.8;
const ORI_SIGMA_FACTOR: f32 = 1.5;
const ORI_RADIUS_FACTOR: f32 = 3.0 * ORI_SIGMA_FACTOR;
const DESC_WIDTH: usize = 4;
const DESC_BINS: usize = 8;
const DESC_SCALE: f32 = 3.0;
const DESC_CLAMP: f32 = 0.2;
pub const SIFT_LEN: usize = DESC_WIDTH * DESC_WIDTH * DESC_BINS;

/// Detector thresholds. `contrast` is expressed for intensities in `[0, 1]`
/// and is compared against `|D| * scales_per_octave`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SiftParams {
    pub contrast: f32,
    pub edge: f32,
}

impl Default for SiftParams {
    fn default() -> Self {
        Self {
            contrast: 0.03,
            edge: 10.0,
        }
    }
}

/// Central-difference gradient of a blurred level at `(x, y)`.
///
/// The orientation is `atan2(dy, dx)` mapped to `[0, 2pi)`, with a flat
/// neighbourhood reported as angle 0.
pub fn gradient_mag_orient(level: &Raster, x: usize, y: usize) -> Result<(f32, f32)> {
    if x == 0 || y == 0 || x + 1 >= level.width() || y + 1 >= level.height() {
        return Err(invalid(format!("({x}, {y}) has no full 4-neighbourhood")));
    }
    Ok(gradient_unchecked(level, x, y))
}

#[inline]
fn gradient_unchecked(level: &Raster, x: usize, y: usize) -> (f32, f32) {
    let dx = level.get(x + 1, y) - level.get(x - 1, y);
    let dy = level.get(x, y + 1) - level.get(x, y - 1);
    let m = (dx * dx + dy * dy).sqrt();
    if m == 0.0 {
        return (0.0, 0.0);
    }
    let mut theta = dy.atan2(dx);
    if theta < 0.0 {
        theta += TAU;
    }
    if theta >= TAU {
        theta -= TAU;
    }
    (m, theta)
}

pub fn detect_sift(ss: &ScaleSpace, contrast: f32, edge: f32) -> Vec<Keypoint> {
    let s = ss.params().scales_per_octave;
    let pre_threshold = 0.5 * contrast * 255.0 / s as f32;
    let mut candidates = Vec::new();
    for (o, octave) in ss.octaves().iter().enumerate() {
        if octave.dogs.len() < 3 {
            continue;
        }
        let (w, h) = octave.dogs[0].dimensions();
        if w <= 2 * BORDER || h <= 2 * BORDER {
            continue;
        }
        for layer in 1..octave.dogs.len() - 1 {
            let (below, cur, above) = (
                &octave.dogs[layer - 1],
                &octave.dogs[layer],
                &octave.dogs[layer + 1],
            );
            for y in BORDER..h - BORDER {
                for x in BORDER..w - BORDER {
                    let v = cur.get(x, y);
                    if v.abs() <= pre_threshold || !is_extremum(below, cur, above, x, y, v) {
                        continue;
                    }
                    if let Some(kp) = refine(ss, o, layer, x, y, contrast, edge) {
                        candidates.push(kp);
                    }
                }
            }
        }
    }

    let kept = dedupe(candidates);
    let mut out = Vec::with_capacity(kept.len());
    for kp in kept {
        for orientation in orientations(ss, &kp) {
            out.push(Keypoint { orientation, ..kp });
        }
    }
    out
}

fn is_extremum(below: &Raster, cur: &Raster, above: &Raster, x: usize, y: usize, v: f32) -> bool {
    let maximum = v > 0.0;
    for layer in [below, cur, above] {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                if std::ptr::eq(layer, cur) && xx == x && yy == y {
                    continue;
                }
                let n = layer.get(xx, yy);
                if (maximum && n > v) || (!maximum && n < v) {
                    return false;
                }
            }
        }
    }
    true
}

/// Quadratic fit of the DoG around a discrete extremum, then contrast and
/// edge-response tests.
fn refine(
    ss: &ScaleSpace,
    octave: usize,
    layer: usize,
    x: usize,
    y: usize,
    contrast: f32,
    edge: f32,
) -> Option<Keypoint> {
    let dogs = &ss.octaves()[octave].dogs;
    let s = ss.params().scales_per_octave;
    let (w, h) = dogs[0].dimensions();
    let (mut xi, mut yi, mut li) = (x as i64, y as i64, layer as i64);
    let mut offset = [0.0f64; 3];
    let mut grad = [0.0f64; 3];
    let mut converged = false;

    for _ in 0..MAX_INTERP_STEPS {
        let (xu, yu, lu) = (xi as usize, yi as usize, li as usize);
        let d = |l: usize, dx: i64, dy: i64| -> f64 {
            dogs[l].get((xu as i64 + dx) as usize, (yu as i64 + dy) as usize) as f64
        };
        let v = d(lu, 0, 0);
        grad = [
            (d(lu, 1, 0) - d(lu, -1, 0)) * 0.5,
            (d(lu, 0, 1) - d(lu, 0, -1)) * 0.5,
            (d(lu + 1, 0, 0) - d(lu - 1, 0, 0)) * 0.5,
        ];
        let dxx = d(lu, 1, 0) + d(lu, -1, 0) - 2.0 * v;
        let dyy = d(lu, 0, 1) + d(lu, 0, -1) - 2.0 * v;
        let dss = d(lu + 1, 0, 0) + d(lu - 1, 0, 0) - 2.0 * v;
        let dxy = (d(lu, 1, 1) - d(lu, -1, 1) - d(lu, 1, -1) + d(lu, -1, -1)) * 0.25;
        let dxs = (d(lu + 1, 1, 0) - d(lu + 1, -1, 0) - d(lu - 1, 1, 0) + d(lu - 1, -1, 0)) * 0.25;
        let dys = (d(lu + 1, 0, 1) - d(lu + 1, 0, -1) - d(lu - 1, 0, 1) + d(lu - 1, 0, -1)) * 0.25;
        let hess = nalgebra::Matrix3::new(dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss);
        let inv = hess.try_inverse()?;
        let step = -(inv * nalgebra::Vector3::new(grad[0], grad[1], grad[2]));
        offset = [step[0], step[1], step[2]];
        if offset.iter().all(|c| c.abs() < 0.5) {
            converged = true;
            break;
        }
        if offset.iter().any(|c| c.abs() > (i32::MAX / 3) as f64) {
            return None;
        }
        xi += offset[0].round() as i64;
        yi += offset[1].round() as i64;
        li += offset[2].round() as i64;
        if li < 1
            || li > s as i64
            || li as usize + 1 >= dogs.len()
            || xi < BORDER as i64
            || yi < BORDER as i64
            || xi >= (w - BORDER) as i64
            || yi >= (h - BORDER) as i64
        {
            return None;
        }
    }
    if !converged {
        return None;
    }

    let (xu, yu, lu) = (xi as usize, yi as usize, li as usize);
    let cur = &dogs[lu];
    let v = cur.get(xu, yu) as f64;
    let value = v + 0.5 * (grad[0] * offset[0] + grad[1] * offset[1] + grad[2] * offset[2]);
    if value.abs() * (s as f64) < (contrast as f64) * 255.0 {
        return None;
    }

    let g = |dx: i64, dy: i64| cur.get((xi + dx) as usize, (yi + dy) as usize) as f64;
    let dxx = g(1, 0) + g(-1, 0) - 2.0 * v;
    let dyy = g(0, 1) + g(0, -1) - 2.0 * v;
    let dxy = (g(1, 1) - g(-1, 1) - g(1, -1) + g(-1, -1)) * 0.25;
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    let r = edge as f64;
    if det <= 0.0 || tr * tr * r >= (r + 1.0) * (r + 1.0) * det {
        return None;
    }

    let factor = (1usize << octave) as f64;
    let layer_f = lu as f32 + offset[2] as f32;
    Some(Keypoint {
        x: ((xu as f64 + offset[0]) * factor) as f32,
        y: ((yu as f64 + offset[1]) * factor) as f32,
        scale: ss.absolute_sigma(octave, layer_f),
        orientation: 0.0,
        response: value.abs() as f32,
        kind: KeypointKind::Sift,
        octave,
        layer: lu,
    })
}

/// Dominant gradient directions: peaks of a smoothed 36-bin histogram that
/// reach 80% of the maximum.
fn orientations(ss: &ScaleSpace, kp: &Keypoint) -> Vec<f32> {
    let level = &ss.octaves()[kp.octave].levels[kp.layer].raster;
    let factor = (1usize << kp.octave) as f32;
    let sigma_oct = kp.scale / factor;
    let (cx, cy) = (
        (kp.x / factor).round() as i64,
        (kp.y / factor).round() as i64,
    );
    let radius = (ORI_RADIUS_FACTOR * sigma_oct).round() as i64;
    let weight_denom = -1.0 / (2.0 * (ORI_SIGMA_FACTOR * sigma_oct).powi(2));
    let mut hist = [0.0f32; ORI_BINS];
    for dy in -radius..=radius {
        let y = cy + dy;
        if y <= 0 || y >= level.height() as i64 - 1 {
            continue;
        }
        for dx in -radius..=radius {
            let x = cx + dx;
            if x <= 0 || x >= level.width() as i64 - 1 {
                continue;
            }
            let (m, theta) = gradient_unchecked(level, x as usize, y as usize);
            let w = (((dx * dx + dy * dy) as f32) * weight_denom).exp();
            let bin = ((theta / TAU * ORI_BINS as f32).round() as usize) % ORI_BINS;
            hist[bin] += w * m;
        }
    }

    let mut smooth = [0.0f32; ORI_BINS];
    for i in 0..ORI_BINS {
        let at = |k: i64| hist[(i as i64 + k).rem_euclid(ORI_BINS as i64) as usize];
        smooth[i] = (at(-2) + at(2)) * (1.0 / 16.0) + (at(-1) + at(1)) * (4.0 / 16.0) + at(0) * (6.0 / 16.0);
    }
    let max = smooth.iter().cloned().fold(0.0f32, f32::max);
    if max <= 0.0 {
        return vec![0.0];
    }
    let mut out = Vec::new();
    for i in 0..ORI_BINS {
        let l = smooth[(i + ORI_BINS - 1) % ORI_BINS];
        let r = smooth[(i + 1) % ORI_BINS];
        let c = smooth[i];
        if c > l && c > r && c >= ORI_PEAK_RATIO * max {
            let shift = 0.5 * (l - r) / (l - 2.0 * c + r);
            let mut bin = i as f32 + shift;
            if bin < 0.0 {
                bin += ORI_BINS as f32;
            }
            let mut angle = bin / ORI_BINS as f32 * TAU;
            if angle >= TAU {
                angle -= TAU;
            }
            out.push(angle);
        }
    }
    if out.is_empty() {
        out.push(0.0);
    }
    out
}

/// Builds the 128-value descriptor, or `None` when the rotated sampling
/// window leaves the octave raster.
pub fn describe_sift(kp: &Keypoint, ss: &ScaleSpace) -> Option<Descriptor> {
    let octave = ss.octaves().get(kp.octave)?;
    let level = &octave.levels.get(kp.layer)?.raster;
    let factor = (1usize << kp.octave) as f32;
    let sigma_oct = kp.scale / factor;
    let (cx, cy) = (
        (kp.x / factor).round() as i64,
        (kp.y / factor).round() as i64,
    );
    let hist_width = DESC_SCALE * sigma_oct;
    let d = DESC_WIDTH as f32;
    let radius = (hist_width * std::f32::consts::SQRT_2 * (d + 1.0) * 0.5).round() as i64;
    if cx - radius < 1
        || cy - radius < 1
        || cx + radius >= level.width() as i64 - 1
        || cy + radius >= level.height() as i64 - 1
    {
        return None;
    }

    let (sin_t, cos_t) = kp.orientation.sin_cos();
    let bins_per_rad = DESC_BINS as f32 / TAU;
    let exp_scale = -1.0 / (d * d * 0.5);
    const W: usize = DESC_WIDTH + 2;
    const B: usize = DESC_BINS + 2;
    let mut hist = [0.0f32; W * W * B];

    for i in -radius..=radius {
        for j in -radius..=radius {
            // rotate the offset into the keypoint frame, in histogram-bin units
            let (ox, oy) = (j as f32, i as f32);
            let c_rot = (ox * cos_t + oy * sin_t) / hist_width;
            let r_rot = (-ox * sin_t + oy * cos_t) / hist_width;
            let rbin = r_rot + d / 2.0 - 0.5;
            let cbin = c_rot + d / 2.0 - 0.5;
            if rbin <= -1.0 || rbin >= d || cbin <= -1.0 || cbin >= d {
                continue;
            }
            let (m, theta) = gradient_unchecked(level, (cx + j) as usize, (cy + i) as usize);
            if m == 0.0 {
                continue;
            }
            let mut rel = theta - kp.orientation;
            rel = rel.rem_euclid(TAU);
            let obin = rel * bins_per_rad;
            let weight = ((c_rot * c_rot + r_rot * r_rot) * exp_scale).exp();
            let v = m * weight;

            let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
            let (dr, dc, dobin) = (rbin - r0, cbin - c0, obin - o0);
            let (r0, c0) = (r0 as i64, c0 as i64);
            let o0 = (o0 as i64).rem_euclid(DESC_BINS as i64) as usize;
            for (ri, rw) in [(0i64, 1.0 - dr), (1, dr)] {
                for (ci, cw) in [(0i64, 1.0 - dc), (1, dc)] {
                    for (oi, ow) in [(0usize, 1.0 - dobin), (1, dobin)] {
                        let rr = (r0 + ri + 1) as usize;
                        let cc = (c0 + ci + 1) as usize;
                        let oo = o0 + oi;
                        hist[(rr * W + cc) * B + oo] += v * rw * cw * ow;
                    }
                }
            }
        }
    }

    let mut vector = vec![0.0f32; SIFT_LEN];
    for r in 0..DESC_WIDTH {
        for c in 0..DESC_WIDTH {
            let base = ((r + 1) * W + (c + 1)) * B;
            // orientation bins wrap around
            hist[base] += hist[base + DESC_BINS];
            hist[base + 1] += hist[base + DESC_BINS + 1];
            for o in 0..DESC_BINS {
                vector[(r * DESC_WIDTH + c) * DESC_BINS + o] = hist[base + o];
            }
        }
    }

    if !normalize(&mut vector) {
        return None;
    }
    for v in &mut vector {
        *v = v.min(DESC_CLAMP);
    }
    if !normalize(&mut vector) {
        return None;
    }
    Some(Descriptor {
        keypoint: *kp,
        vector,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::{build_scale_space, GrayImage};
    use crate::test_support::{rotate_about_center, smooth_noise};
    use std::f32::consts::PI;

    fn neighbourhood(l: f32, r: f32, up: f32, down: f32) -> Raster {
        // L(x-1,y)=l, L(x+1,y)=r, L(x,y-1)=up, L(x,y+1)=down around (1,1)
        let mut img = Raster::zeros(3, 3);
        img.set(0, 1, l);
        img.set(2, 1, r);
        img.set(1, 0, up);
        img.set(1, 2, down);
        img
    }

    #[test]
    fn gradient_examples() {
        let (m, t) = gradient_mag_orient(&neighbourhood(1.0, 5.0, 3.0, 3.0), 1, 1).unwrap();
        assert_eq!((m, t), (4.0, 0.0));
        let (m, t) = gradient_mag_orient(&neighbourhood(7.0, 7.0, 7.0, 7.0), 1, 1).unwrap();
        assert_eq!((m, t), (0.0, 0.0));
        let (m, t) = gradient_mag_orient(&neighbourhood(0.0, 2.0, 0.0, 2.0), 1, 1).unwrap();
        assert!((m - 2.0 * 2f32.sqrt()).abs() < 1e-6);
        assert!((t - PI / 4.0).abs() < 1e-6);
    }

    #[test]
    fn gradient_orientation_range() {
        let (_, t) = gradient_mag_orient(&neighbourhood(0.0, 0.0, 1.0, 0.0), 1, 1).unwrap();
        assert!((t - 1.5 * PI).abs() < 1e-6);
        assert!(gradient_mag_orient(&neighbourhood(0.0, 0.0, 1.0, 0.0), 0, 1).is_err());
        assert!(gradient_mag_orient(&neighbourhood(0.0, 0.0, 1.0, 0.0), 1, 2).is_err());
    }

    #[test]
    fn constant_image_has_no_keypoints() {
        let img = Raster::from_fn(128, 128, |_, _| 90.0);
        let ss = build_scale_space(&img, 3, 3).unwrap();
        assert!(detect_sift(&ss, 0.03, 10.0).is_empty());
    }

    #[test]
    fn blob_is_detected_near_its_center() {
        let (cx, cy) = (70.3f32, 58.7f32);
        let img = Raster::from_fn(128, 128, |x, y| {
            let d2 = (x as f32 - cx).powi(2) + (y as f32 - cy).powi(2);
            40.0 + 150.0 * (-d2 / (2.0 * 4.0 * 4.0)).exp()
        });
        let ss = build_scale_space(&img, 3, 3).unwrap();
        let kps = detect_sift(&ss, 0.03, 10.0);
        assert!(!kps.is_empty());
        let best = kps
            .iter()
            .map(|k| ((k.x - cx).powi(2) + (k.y - cy).powi(2)).sqrt())
            .fold(f32::INFINITY, f32::min);
        assert!(best <= 2.0, "closest keypoint {best} px from blob");
    }

    #[test]
    fn description_is_deterministic_and_unit() {
        let img = Raster::from_fn(96, 96, |x, y| {
            (((x as f32) * 0.3).sin() * 50.0 + ((y as f32) * 0.21 + (x as f32) * 0.05).cos() * 40.0) + 100.0
        });
        let ss = build_scale_space(&img, 2, 3).unwrap();
        let kp = Keypoint {
            x: 48.0,
            y: 45.0,
            scale: ss.absolute_sigma(0, 1.0),
            orientation: 0.7,
            response: 1.0,
            kind: KeypointKind::Sift,
            octave: 0,
            layer: 1,
        };
        let a = describe_sift(&kp, &ss).unwrap();
        let b = describe_sift(&kp, &ss).unwrap();
        assert_eq!(a.vector, b.vector);
        assert_eq!(a.vector.len(), SIFT_LEN);
        let n: f32 = a.vector.iter().map(|v| v * v).sum::<f32>().sqrt();
        assert!((n - 1.0).abs() < 1e-6);
        assert!(a.vector.iter().all(|&v| v >= 0.0));

        let edge = Keypoint { x: 3.0, ..kp };
        assert!(describe_sift(&edge, &ss).is_none());
    }

    fn d2(a: &[f32], b: &[f32]) -> f32 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    fn kp_at(x: f32, y: f32, orientation: f32, ss: &ScaleSpace) -> Keypoint {
        Keypoint {
            x,
            y,
            scale: ss.absolute_sigma(0, 1.0),
            orientation,
            response: 1.0,
            kind: KeypointKind::Sift,
            octave: 0,
            layer: 1,
        }
    }

    #[test]
    fn translated_copy_gives_same_descriptor() {
        let patch = smooth_noise(64, 64, 2.0, 11);
        let img = Raster::from_fn(192, 96, |x, y| {
            if (16..80).contains(&x) && (16..80).contains(&y) {
                patch.get(x - 16, y - 16)
            } else if (112..176).contains(&x) && (16..80).contains(&y) {
                patch.get(x - 112, y - 16)
            } else {
                128.0
            }
        });
        let ss = build_scale_space(&img, 2, 3).unwrap();
        let a = describe_sift(&kp_at(48.0, 48.0, 0.4, &ss), &ss).unwrap();
        let b = describe_sift(&kp_at(144.0, 48.0, 0.4, &ss), &ss).unwrap();
        assert!(d2(&a.vector, &b.vector).sqrt() <= 1e-3);
    }

    #[test]
    fn rotation_with_orientation_stays_below_ratio() {
        let img = smooth_noise(128, 128, 2.0, 12);
        let angle = PI / 6.0;
        let rot = rotate_about_center(&img, angle as f64);
        let other = smooth_noise(128, 128, 2.0, 13);
        let c = (127.0f32) / 2.0;
        let ss_a = build_scale_space(img.raster(), 2, 3).unwrap();
        let ss_b = build_scale_space(rot.raster(), 2, 3).unwrap();
        let ss_c = build_scale_space(other.raster(), 2, 3).unwrap();
        let a = describe_sift(&kp_at(c, c, 0.2, &ss_a), &ss_a).unwrap();
        let b = describe_sift(&kp_at(c, c, 0.2 + angle, &ss_b), &ss_b).unwrap();
        let u = describe_sift(&kp_at(c, c, 0.2, &ss_c), &ss_c).unwrap();
        let (near, far) = (d2(&a.vector, &b.vector), d2(&a.vector, &u.vector));
        assert!(near / far <= 0.6, "rotated {near}, unrelated {far}");
    }

    #[test]
    fn quarter_turn_keeps_keypoint_count() {
        let img = smooth_noise(128, 128, 2.5, 14);
        let rot = GrayImage::from_fn(128, 128, |x, y| img.get(y, 127 - x));
        let count = |g: &GrayImage| {
            let ss = build_scale_space(g.raster(), 3, 3).unwrap();
            detect_sift(&ss, 0.03, 10.0).len() as f32
        };
        let (a, b) = (count(&img), count(&rot));
        assert!(a > 10.0);
        assert!((a - b).abs() <= 0.05 * a, "{a} vs {b}");
    }
}
