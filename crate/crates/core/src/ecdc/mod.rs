//! Evolving circular domains coverage: paired disks grow around every
//! surviving match while their block features agree, and the union of the
//! final disks, closed morphologically, is the tamper mask.

mod mask;
mod morph;

use rayon::prelude::*;

pub use mask::CoverageMask;
pub use morph::{auto_morph_radius, dilate, erode, morph_refine};

use crate::blockfeat::{domains_match, BlockParams};
use crate::config::Config;
use crate::error::{invalid, Result};
use crate::geofilter::{filter_matches, FilteredPair};
use crate::imgcore::{sample_disk, GrayImage};
use crate::keypoint::extract_all;
use crate::matching::{match_both, MatchPair, MatchSet};

/// Increasing radii `r1, r1 + tau, ...` not exceeding `rm`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadiusSchedule {
    radii: Vec<f64>,
}

impl RadiusSchedule {
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn first(&self) -> f64 {
        self.radii[0]
    }

    pub fn last(&self) -> f64 {
        *self.radii.last().unwrap()
    }
}

pub fn radius_schedule(r1: f64, rm: f64, tau: f64) -> Result<RadiusSchedule> {
    if !(r1 > 0.0) || !(tau > 0.0) || !(r1 <= rm) || !rm.is_finite() {
        return Err(invalid(format!(
            "radius schedule needs 0 < r1 <= rm and tau > 0 (got r1={r1}, rm={rm}, tau={tau})"
        )));
    }
    let steps = ((rm - r1) / tau + 1e-9).floor() as usize;
    Ok(RadiusSchedule {
        radii: (0..=steps).map(|k| r1 + k as f64 * tau).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EcdcParams {
    pub r1: f64,
    pub rm: f64,
    pub tau: f64,
    pub block: BlockParams,
    /// Closing radius; `None` derives it from the image size.
    pub morph_radius: Option<usize>,
}

impl Default for EcdcParams {
    fn default() -> Self {
        Self {
            r1: 1.5,
            rm: 37.5,
            tau: 2.0,
            block: BlockParams::default(),
            morph_radius: None,
        }
    }
}

impl EcdcParams {
    pub fn schedule(&self) -> Result<RadiusSchedule> {
        radius_schedule(self.r1, self.rm, self.tau)
    }
}

fn pixel_center(p: (f32, f32)) -> (i64, i64) {
    (p.0.round() as i64, p.1.round() as i64)
}

/// Largest radius of the schedule at which the disks around both endpoints
/// still match, growing from the smallest radius and stopping at the first
/// mismatch. `None` when even the first radius fails.
///
/// Disks are centered on the endpoints rounded to the nearest pixel.
pub fn grow_pair(
    img: &GrayImage,
    pair: &MatchPair,
    sched: &RadiusSchedule,
    block: &BlockParams,
) -> Result<Option<f64>> {
    let (ca, cb) = (pixel_center(pair.a), pixel_center(pair.b));
    let (w, h) = (img.width() as i64, img.height() as i64);
    for c in [ca, cb] {
        if c.0 < 0 || c.1 < 0 || c.0 >= w || c.1 >= h {
            return Err(invalid(format!("pair endpoint {c:?} outside image")));
        }
    }
    let (ca, cb) = ((ca.0 as f64, ca.1 as f64), (cb.0 as f64, cb.1 as f64));
    let mut last = None;
    for &r in sched.radii() {
        let (da, db) = (sample_disk(img, ca, r)?, sample_disk(img, cb, r)?);
        let ok = match (block.feature(&da), block.feature(&db)) {
            (Ok(fa), Ok(fb)) => domains_match(&fa, &fb, block.sigma_s(&da, &db))?,
            // too few pixels for moments at this radius: keep growing
            _ => true,
        };
        if !ok {
            break;
        }
        last = Some(r);
    }
    Ok(last)
}

/// Union over all pairs of both endpoint disks at the pair's final radius.
pub fn cover(
    img: &GrayImage,
    pairs: &[MatchPair],
    sched: &RadiusSchedule,
    block: &BlockParams,
) -> Result<CoverageMask> {
    let radii: Vec<Option<f64>> = pairs
        .par_iter()
        .map(|p| grow_pair(img, p, sched, block))
        .collect::<Result<_>>()?;
    let mut mask = CoverageMask::new(img.width(), img.height());
    for (p, r) in pairs.iter().zip(radii) {
        if let Some(r) = r {
            mask.paint_disk(pixel_center(p.a), r);
            mask.paint_disk(pixel_center(p.b), r);
        }
    }
    Ok(mask)
}

/// Replaces the second endpoint by the group model's image of the first when
/// that lands inside the image.
pub fn project_pair(fp: &FilteredPair, width: usize, height: usize) -> MatchPair {
    let (x, y) = fp.model.apply((fp.pair.a.0 as f64, fp.pair.a.1 as f64));
    let inside = x >= -0.5 && y >= -0.5 && x < width as f64 - 0.5 && y < height as f64 - 0.5;
    if inside {
        MatchPair {
            b: (x as f32, y as f32),
            ..fp.pair
        }
    } else {
        fp.pair
    }
}

/// Everything the pipeline produced for one image.
#[derive(Clone, Debug)]
pub struct Detection {
    pub mask: CoverageMask,
    pub matches: MatchSet,
    pub filtered: Vec<FilteredPair>,
    pub sift_count: usize,
    pub lpsd_count: usize,
}

impl Detection {
    pub fn is_forged(&self) -> bool {
        !self.mask.is_empty()
    }
}

/// Keypoints, g2NN matching, geometric filtering, domain growth and closing.
pub fn detect(img: &GrayImage, config: &Config) -> Result<Detection> {
    let features = extract_all(img, &config.keypoints);
    let matches = match_both(&features.sift, &features.lpsd, &config.matching);
    let filtered = filter_matches(&matches, &config.geo)?;
    let (w, h) = img.dimensions();
    let projected: Vec<MatchPair> = filtered.iter().map(|fp| project_pair(fp, w, h)).collect();
    let sched = config.ecdc.schedule()?;
    let raw = cover(img, &projected, &sched, &config.ecdc.block)?;
    let radius = config.ecdc.morph_radius.unwrap_or_else(|| auto_morph_radius(w, h));
    let mask = morph_refine(&raw, radius)?;
    Ok(Detection {
        mask,
        matches,
        filtered,
        sift_count: features.sift.len(),
        lpsd_count: features.lpsd.len(),
    })
}
