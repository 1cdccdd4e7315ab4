//! Copy-move forgery synthesis with exact ground truth under rotation,
//! scaling, noise, JPEG and downsampling attacks.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::codecs::jpeg::JpegEncoder;
use image::ImageDecoder;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ecdc::CoverageMask;
use crate::error::{invalid, io_err, Error, Result};
use crate::imgcore::{GrayImage, Raster};

/// Attack applied to the copied fragment or to the whole forged image.
/// Noise deviations are on the `[0, 1]` intensity scale.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackSpec {
    #[default]
    None,
    Rotate { deg: f64 },
    Scale { percent: f64 },
    NoiseLocal { std: f64 },
    NoiseGlobal { std: f64 },
    Jpeg { quality: u8 },
    Downsample { percent: f64 },
}

impl AttackSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            AttackSpec::None => true,
            AttackSpec::Rotate { deg } => deg > -180.0 && deg <= 180.0,
            AttackSpec::Scale { percent } => percent > 0.0 && percent.is_finite(),
            AttackSpec::NoiseLocal { std } | AttackSpec::NoiseGlobal { std } => std >= 0.0 && std.is_finite(),
            AttackSpec::Jpeg { quality } => (1..=100).contains(&quality),
            AttackSpec::Downsample { percent } => percent > 0.0 && percent <= 100.0,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("attack parameter out of range: {self:?}")))
        }
    }

    /// The swept parameter, `None` for the plain case.
    pub fn param(&self) -> Option<f64> {
        match *self {
            AttackSpec::None => None,
            AttackSpec::Rotate { deg } => Some(deg),
            AttackSpec::Scale { percent } | AttackSpec::Downsample { percent } => Some(percent),
            AttackSpec::NoiseLocal { std } | AttackSpec::NoiseGlobal { std } => Some(std),
            AttackSpec::Jpeg { quality } => Some(quality as f64),
        }
    }

    /// `(rotation in radians, scale factor)` applied to the fragment.
    fn fragment_transform(&self) -> (f64, f64) {
        match *self {
            AttackSpec::Rotate { deg } => (deg.to_radians(), 1.0),
            AttackSpec::Scale { percent } => (0.0, percent / 100.0),
            _ => (0.0, 1.0),
        }
    }

    fn label(&self) -> String {
        match self.param() {
            None => "plain".to_string(),
            Some(p) => format!("{}_{}", Scenario::of(self), p),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Plain,
    Scale,
    Rot,
    NoiseLocal,
    NoiseGlobal,
    Jpeg,
    Downsample,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::Plain,
        Scenario::Scale,
        Scenario::Rot,
        Scenario::NoiseLocal,
        Scenario::NoiseGlobal,
        Scenario::Jpeg,
        Scenario::Downsample,
    ];

    pub fn of(spec: &AttackSpec) -> Scenario {
        match spec {
            AttackSpec::None => Scenario::Plain,
            AttackSpec::Rotate { .. } => Scenario::Rot,
            AttackSpec::Scale { .. } => Scenario::Scale,
            AttackSpec::NoiseLocal { .. } => Scenario::NoiseLocal,
            AttackSpec::NoiseGlobal { .. } => Scenario::NoiseGlobal,
            AttackSpec::Jpeg { .. } => Scenario::Jpeg,
            AttackSpec::Downsample { .. } => Scenario::Downsample,
        }
    }

    /// The attack parameter grid of the scenario.
    pub fn grid(&self) -> Vec<AttackSpec> {
        match self {
            Scenario::Plain => vec![AttackSpec::None],
            Scenario::Scale => (0..10)
                .map(|k| 91.0 + 2.0 * k as f64)
                .chain([50.0, 80.0, 120.0, 200.0])
                .map(|percent| AttackSpec::Scale { percent })
                .collect(),
            Scenario::Rot => [2.0, 4.0, 6.0, 8.0, 10.0, 20.0, 60.0, 180.0]
                .into_iter()
                .map(|deg| AttackSpec::Rotate { deg })
                .collect(),
            Scenario::NoiseLocal => noise_grid().map(|std| AttackSpec::NoiseLocal { std }).collect(),
            Scenario::NoiseGlobal => noise_grid().map(|std| AttackSpec::NoiseGlobal { std }).collect(),
            Scenario::Jpeg => (2..=10).map(|q| AttackSpec::Jpeg { quality: q * 10 }).collect(),
            Scenario::Downsample => [90.0, 70.0, 50.0, 30.0, 10.0]
                .into_iter()
                .map(|percent| AttackSpec::Downsample { percent })
                .collect(),
        }
    }

    /// Largest footprint growth of a fragment over the grid.
    fn extent(&self) -> f64 {
        self.grid()
            .iter()
            .map(|s| {
                let (theta, scale) = s.fragment_transform();
                scale * (theta.cos().abs() + theta.sin().abs())
            })
            .fold(1.0, f64::max)
    }
}

fn noise_grid() -> impl Iterator<Item = f64> {
    (1..=5).map(|k| (k as f64 * 0.02 * 100.0).round() / 100.0)
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scenario::Plain => "plain",
            Scenario::Scale => "scale",
            Scenario::Rot => "rot",
            Scenario::NoiseLocal => "noise_local",
            Scenario::NoiseGlobal => "noise_global",
            Scenario::Jpeg => "jpeg",
            Scenario::Downsample => "downsample",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.to_string() == s)
            .ok_or_else(|| invalid(format!("unknown scenario {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + (self.w as f64 - 1.0) / 2.0,
            self.y as f64 + (self.h as f64 - 1.0) / 2.0,
        )
    }
}

/// Source rectangle and the top-left corner its untransformed copy would
/// occupy; rotation and scaling act about the fragment center.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub src: Rect,
    pub dst: (usize, usize),
}

#[derive(Clone, Debug)]
pub struct ForgeryCase {
    pub forged: GrayImage,
    pub truth: CoverageMask,
    pub spec: AttackSpec,
    pub placement: Placement,
    pub seed: u64,
}

fn quantize(r: &Raster) -> GrayImage {
    let (w, h) = r.dimensions();
    GrayImage::from_fn(w, h, |x, y| r.get(x, y).round().clamp(0.0, 255.0))
}

fn jpeg_round_trip(img: &GrayImage, quality: u8) -> Result<GrayImage> {
    let luma = img.to_luma8();
    let mut buf = Vec::new();
    JpegEncoder::new_with_quality(&mut buf, quality).encode_image(&luma)?;
    let decoder = image::codecs::jpeg::JpegDecoder::new(Cursor::new(&buf))?;
    let (w, h) = decoder.dimensions();
    let mut bytes = vec![0u8; decoder.total_bytes() as usize];
    decoder.read_image(&mut bytes)?;
    GrayImage::new(w as usize, h as usize, bytes.into_iter().map(f32::from).collect())
}

fn downsample(img: &GrayImage, truth: &CoverageMask, percent: f64) -> (GrayImage, CoverageMask) {
    let (w, h) = img.dimensions();
    let nw = ((w as f64 * percent / 100.0).round() as usize).max(1);
    let nh = ((h as f64 * percent / 100.0).round() as usize).max(1);
    let resized = image::imageops::resize(
        &img.to_luma8(),
        nw as u32,
        nh as u32,
        image::imageops::FilterType::Triangle,
    );
    let small = GrayImage::from_fn(nw, nh, |x, y| resized.get_pixel(x as u32, y as u32)[0] as f32);
    let (fx, fy) = (w as f64 / nw as f64, h as f64 / nh as f64);
    let mask = CoverageMask::from_fn(nw, nh, |x, y| {
        let sx = (((x as f64 + 0.5) * fx) as usize).min(w - 1);
        let sy = (((y as f64 + 0.5) * fy) as usize).min(h - 1);
        truth.get(sx, sy)
    });
    (small, mask)
}

/// Copies `placement.src`, transforms it, pastes it at `placement.dst` and
/// applies the image-level attack. Truth covers the source rectangle and the
/// exact pasted footprint.
pub fn synthesize(base: &GrayImage, placement: &Placement, spec: &AttackSpec, seed: u64) -> Result<ForgeryCase> {
    spec.validate()?;
    let (w, h) = base.dimensions();
    let src = placement.src;
    if src.w == 0 || src.h == 0 || src.x + src.w > w || src.y + src.h > h {
        return Err(invalid(format!("source rectangle {src:?} outside {w}x{h} image")));
    }
    let (theta, scale) = spec.fragment_transform();
    let cs = src.center();
    let dst_rect = Rect {
        x: placement.dst.0,
        y: placement.dst.1,
        ..src
    };
    let cd = dst_rect.center();
    let (sn, cn) = theta.sin_cos();

    // destination footprint bounds from the transformed corners
    let (hw, hh) = (src.w as f64 / 2.0, src.h as f64 / 2.0);
    let corners = [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)].map(|(dx, dy)| {
        (
            cd.0 + scale * (cn * dx - sn * dy),
            cd.1 + scale * (sn * dx + cn * dy),
        )
    });
    let (min_x, max_x) = corners.iter().fold((f64::MAX, f64::MIN), |a, c| (a.0.min(c.0), a.1.max(c.0)));
    let (min_y, max_y) = corners.iter().fold((f64::MAX, f64::MIN), |a, c| (a.0.min(c.1), a.1.max(c.1)));
    let eps = 1e-6;
    if min_x < -0.5 - eps || min_y < -0.5 - eps || max_x > w as f64 - 0.5 + eps || max_y > h as f64 - 0.5 + eps {
        return Err(invalid(format!(
            "pasted fragment spans x [{min_x:.1}, {max_x:.1}], y [{min_y:.1}, {max_y:.1}], outside {w}x{h} image"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut forged = base.raster().clone();
    let mut truth = CoverageMask::new(w, h);
    for y in src.y..src.y + src.h {
        for x in src.x..src.x + src.w {
            truth.set(x, y, true);
        }
    }
    let local_noise = match *spec {
        AttackSpec::NoiseLocal { std } if std > 0.0 => Some(Normal::new(0.0, std * 255.0).unwrap()),
        _ => None,
    };
    let x_range = (min_x.floor().max(0.0) as usize)..=(max_x.ceil().min(w as f64 - 1.0) as usize);
    let y_range = (min_y.floor().max(0.0) as usize)..=(max_y.ceil().min(h as f64 - 1.0) as usize);
    let (sx0, sx1) = (src.x as f64 - 0.5, (src.x + src.w) as f64 - 0.5);
    let (sy0, sy1) = (src.y as f64 - 0.5, (src.y + src.h) as f64 - 0.5);
    for y in y_range {
        for x in x_range.clone() {
            let (dx, dy) = (x as f64 - cd.0, y as f64 - cd.1);
            // inverse rotation and scaling back into the source rectangle
            let px = cs.0 + (cn * dx + sn * dy) / scale;
            let py = cs.1 + (-sn * dx + cn * dy) / scale;
            // snap values within rounding error of a pixel center
            let snap = |v: f64| if (v - v.round()).abs() < 1e-9 { v.round() } else { v };
            let (px, py) = (snap(px), snap(py));
            if px < sx0 || px >= sx1 || py < sy0 || py >= sy1 {
                continue;
            }
            let mut v = base.bilinear_clamped(px, py);
            if let Some(n) = &local_noise {
                v += n.sample(&mut rng) as f32;
            }
            forged.set(x, y, v);
            truth.set(x, y, true);
        }
    }
    let mut forged = quantize(&forged);

    match *spec {
        AttackSpec::NoiseGlobal { std } if std > 0.0 => {
            let n = Normal::new(0.0, std * 255.0).unwrap();
            let noisy = Raster::from_fn(w, h, |x, y| forged.get(x, y) + n.sample(&mut rng) as f32);
            forged = quantize(&noisy);
        }
        AttackSpec::Jpeg { quality } => forged = jpeg_round_trip(&forged, quality)?,
        AttackSpec::Downsample { percent } if percent < 100.0 => {
            (forged, truth) = downsample(&forged, &truth, percent);
        }
        _ => {}
    }
    Ok(ForgeryCase {
        forged,
        truth,
        spec: *spec,
        placement: *placement,
        seed,
    })
}

/// Mean gradient magnitude over the square at `(x, y)`.
fn texture_score(img: &GrayImage, x: usize, y: usize, side: usize) -> f64 {
    let mut s = 0.0;
    for yy in (y + 1..y + side - 1).step_by(2) {
        for xx in (x + 1..x + side - 1).step_by(2) {
            let gx = img.get(xx + 1, yy) - img.get(xx - 1, yy);
            let gy = img.get(xx, yy + 1) - img.get(xx, yy - 1);
            s += ((gx * gx + gy * gy) as f64).sqrt();
        }
    }
    s
}

/// Picks a textured `side`-pixel source square and a destination far enough
/// away that the fragment, grown by `extent`, neither leaves the image nor
/// touches the source.
pub fn auto_placement(base: &GrayImage, side: usize, extent: f64, seed: u64) -> Result<Placement> {
    let (w, h) = base.dimensions();
    let grown = (side as f64 * extent).ceil() as usize;
    let margin = 8;
    if side < 4 || 2 * margin + side > w.min(h) || grown + 2 * margin > w.min(h) {
        return Err(invalid(format!("fragment of side {side} does not fit a {w}x{h} image")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = 16;
    let mut sources: Vec<(f64, usize, usize)> = Vec::new();
    for y in (margin..=h - margin - side).step_by(step) {
        for x in (margin..=w - margin - side).step_by(step) {
            sources.push((texture_score(base, x, y, side), x, y));
        }
    }
    sources.sort_by(|a, b| b.0.total_cmp(&a.0));
    let half_grown = grown as f64 / 2.0;
    let pad = (grown - side) / 2 + 1;
    // a shuffled pick among the most textured squares, then the rest by score
    let top: Vec<usize> = (0..sources.len().min(8)).collect();
    let mut picks: Vec<usize> = top.choose_multiple(&mut rng, top.len()).copied().collect();
    picks.extend(top.len()..sources.len());
    for i in picks {
        let (_, sx, sy) = sources[i];
        let src = Rect { x: sx, y: sy, w: side, h: side };
        let cs = src.center();
        let mut dests = Vec::new();
        for y in (margin + pad..=h.saturating_sub(margin + side + pad)).step_by(step / 2) {
            for x in (margin + pad..=w.saturating_sub(margin + side + pad)).step_by(step / 2) {
                let cd = (x as f64 + (side as f64 - 1.0) / 2.0, y as f64 + (side as f64 - 1.0) / 2.0);
                // keep the grown fragment's bounding square clear of the source
                let gap_x = (cd.0 - cs.0).abs() - half_grown - side as f64 / 2.0;
                let gap_y = (cd.1 - cs.1).abs() - half_grown - side as f64 / 2.0;
                if gap_x.max(gap_y) >= margin as f64 {
                    dests.push((x, y));
                }
            }
        }
        if let Some(&dst) = dests.choose(&mut rng) {
            return Ok(Placement { src, dst });
        }
    }
    Err(invalid(format!("no room for a {side}px fragment and its copy")))
}

fn case_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Every case of a scenario's parameter grid for one base image and placement.
pub fn attack_suite(base: &GrayImage, placement: &Placement, scenario: Scenario, seed: u64) -> Result<Vec<ForgeryCase>> {
    scenario
        .grid()
        .par_iter()
        .enumerate()
        .map(|(i, spec)| synthesize(base, placement, spec, case_seed(seed, i)))
        .collect()
}

/// Placement suitable for every case of the scenario.
pub fn scenario_placement(base: &GrayImage, scenario: Scenario, side: usize, seed: u64) -> Result<Placement> {
    auto_placement(base, side, scenario.extent(), seed)
}

/// One manifest entry. Paths are relative to the manifest's directory; a
/// case without `truth` is a pristine control.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub id: String,
    pub forged: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
    #[serde(default)]
    pub spec: AttackSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement: Option<Placement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub cases: Vec<CaseRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(io_err(path))
    }
}

/// Writes `case.id/{forged.png, truth.png, case.json}` below `dir` and
/// returns the record listing it.
pub fn write_case(dir: &Path, id: &str, case: &ForgeryCase, base: Option<&str>) -> Result<CaseRecord> {
    let case_dir = dir.join(id);
    fs::create_dir_all(&case_dir).map_err(io_err(&case_dir))?;
    case.forged.save_png(case_dir.join("forged.png"))?;
    case.truth.save_png(case_dir.join("truth.png"))?;
    let record = CaseRecord {
        id: id.to_string(),
        forged: format!("{id}/forged.png"),
        truth: Some(format!("{id}/truth.png")),
        spec: case.spec,
        placement: Some(case.placement),
        seed: Some(case.seed),
        base: base.map(str::to_string),
    };
    let json = case_dir.join("case.json");
    fs::write(&json, serde_json::to_string_pretty(&record)?).map_err(io_err(&json))?;
    Ok(record)
}

/// Writes a whole suite plus its manifest; returns the manifest path.
pub fn write_suite(dir: &Path, prefix: &str, cases: &[ForgeryCase], base: Option<&str>) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut manifest = Manifest::default();
    for (i, case) in cases.iter().enumerate() {
        let id = format!("{prefix}{i:03}_{}", case.spec.label());
        manifest.cases.push(write_case(dir, &id, case, base)?);
    }
    let path = dir.join(MANIFEST_FILE);
    manifest.save(&path)?;
    Ok(path)
}
