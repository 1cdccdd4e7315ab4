//! Keypoint detection and description: SIFT on a DoG pyramid and
//! Fast-Hessian keypoints described by log-polar SURF sums (LPSD).

mod lpsd;
mod sift;
mod surf;

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use lpsd::{describe_lpsd, describe_lpsd_integral, LPSD_LEN};
pub use sift::{describe_sift, detect_sift, gradient_mag_orient, SiftParams, SIFT_LEN};
pub use surf::{detect_surf, hessian_response, octave_filter_sizes, HessianResponse};

use crate::imgcore::{default_octaves, integral, GrayImage, ScaleSpace, ScaleSpaceParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum KeypointKind {
    Sift,
    Lpsd,
}

impl KeypointKind {
    pub fn descriptor_len(self) -> usize {
        match self {
            KeypointKind::Sift => SIFT_LEN,
            KeypointKind::Lpsd => LPSD_LEN,
        }
    }
}

impl std::fmt::Display for KeypointKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KeypointKind::Sift => "SIFT",
            KeypointKind::Lpsd => "LPSD",
        })
    }
}

/// A located interest point. `scale` is a blur sigma in input pixels and
/// `orientation` lies in `[0, 2pi)`. `octave` and `layer` locate the
/// detector level the point came from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    pub scale: f32,
    pub orientation: f32,
    pub response: f32,
    pub kind: KeypointKind,
    pub octave: usize,
    pub layer: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor {
    pub keypoint: Keypoint,
    pub vector: Vec<f32>,
}

/// Scales `v` to unit L2 norm. Returns false (leaving `v` untouched) when the
/// norm is zero or not finite.
pub fn normalize(v: &mut [f32]) -> bool {
    let norm = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return false;
    }
    for x in v.iter_mut() {
        *x = (*x as f64 / norm) as f32;
    }
    true
}

/// Drops keypoints lying within 2 px of a stronger one from the same
/// detector level.
pub fn dedupe(mut kps: Vec<Keypoint>) -> Vec<Keypoint> {
    kps.sort_by(|a, b| {
        b.response
            .abs()
            .total_cmp(&a.response.abs())
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
    let mut kept: Vec<Keypoint> = Vec::with_capacity(kps.len());
    for kp in kps {
        let close = kept.iter().any(|k| {
            k.octave == kp.octave
                && k.layer == kp.layer
                && (k.x - kp.x).powi(2) + (k.y - kp.y).powi(2) < 4.0
        });
        if !close {
            kept.push(kp);
        }
    }
    kept
}

fn position_order(a: &Keypoint, b: &Keypoint) -> Ordering {
    a.y.total_cmp(&b.y)
        .then(a.x.total_cmp(&b.x))
        .then(a.scale.total_cmp(&b.scale))
        .then(a.orientation.total_cmp(&b.orientation))
}

/// Detector settings for both keypoint families.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeypointParams {
    pub sift: SiftParams,
    /// SIFT pyramid depth; `None` picks it from the image size.
    pub sift_octaves: Option<usize>,
    pub scales_per_octave: usize,
    pub surf_threshold: f32,
    pub surf_octaves: usize,
}

impl Default for KeypointParams {
    fn default() -> Self {
        Self {
            sift: SiftParams::default(),
            sift_octaves: None,
            scales_per_octave: 3,
            surf_threshold: 100.0,
            surf_octaves: 4,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Features {
    pub sift: Vec<Descriptor>,
    pub lpsd: Vec<Descriptor>,
}

/// Extracts SIFT and LPSD descriptors from the whole image. The two sets are
/// independent; each is sorted by `(y, x, scale)`.
pub fn extract_all(img: &GrayImage, params: &KeypointParams) -> Features {
    let (w, h) = img.dimensions();
    let octaves = params.sift_octaves.unwrap_or_else(|| default_octaves(w, h));
    let (sift, lpsd) = rayon::join(
        || {
            let ss_params = ScaleSpaceParams::new(octaves, params.scales_per_octave);
            match ScaleSpace::build(img.raster(), ss_params) {
                Ok(ss) => {
                    let mut kps = detect_sift(&ss, params.sift.contrast, params.sift.edge);
                    kps.sort_by(position_order);
                    kps.par_iter()
                        .filter_map(|kp| describe_sift(kp, &ss))
                        .collect()
                }
                // too small for a pyramid: nothing to detect
                Err(_) => Vec::new(),
            }
        },
        || {
            let ii = integral(img.raster());
            let mut kps = detect_surf(&ii, params.surf_octaves, params.surf_threshold);
            kps.sort_by(position_order);
            kps.par_iter()
                .filter_map(|kp| describe_lpsd_integral(kp, &ii))
                .collect()
        },
    );
    Features { sift, lpsd }
}

#[derive(Serialize)]
struct KeypointRecord {
    x: f32,
    y: f32,
    scale: f32,
    orientation: f32,
    kind: KeypointKind,
}

/// Writes one JSON object per keypoint: `{x, y, scale, orientation, kind}`.
pub fn write_keypoints_jsonl<W: Write>(out: &mut W, descs: &[Descriptor]) -> crate::Result<()> {
    for d in descs {
        let k = &d.keypoint;
        let rec = KeypointRecord {
            x: k.x,
            y: k.y,
            scale: k.scale,
            orientation: k.orientation,
            kind: k.kind,
        };
        serde_json::to_writer(&mut *out, &rec)?;
        out.write_all(b"\n").map_err(serde_json::Error::io)?;
    }
    Ok(())
}
