//! Precision, recall and F1 at pixel and image level, tri-color renderings
//! and batch evaluation over suite manifests.
//!
//! Division conventions: at pixel level, an empty prediction or an empty
//! truth (but not both) scores `p = r = F1 = 0`. When nothing is forged and
//! nothing is flagged, `p = r = F1 = 1` and the report is marked `undefined`;
//! batch pixel means skip such cases, so pristine controls only count at
//! image level.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::ecdc::{detect, CoverageMask};
use crate::error::{invalid, io_err, Error, Result};
use crate::forgerylab::{AttackSpec, CaseRecord, Manifest, Scenario};
use crate::imgcore::{load_grayscale, GrayImage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Image,
    Pixel,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    /// `(p, r, F1, undefined)` under the module's division conventions.
    pub fn scores(&self) -> (f64, f64, f64, bool) {
        let (tp, fp, fn_) = (self.tp as f64, self.fp as f64, self.fn_ as f64);
        if self.tp + self.fp == 0 && self.fn_ == 0 {
            return (1.0, 1.0, 1.0, true);
        }
        let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        (p, r, f1, false)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub id: String,
    pub p: f64,
    pub r: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub spec: AttackSpec,
    /// Whether the detector flagged the image and whether it is forged.
    #[serde(default)]
    pub flagged: bool,
    #[serde(default)]
    pub forged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub level: Level,
    #[serde(flatten)]
    pub counts: Counts,
    pub p: f64,
    pub r: f64,
    pub f1: f64,
    /// Set when p and r have no defined value and default to 1.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub undefined: bool,
    #[serde(default)]
    pub cases: Vec<CaseResult>,
}

impl EvalReport {
    fn from_counts(level: Level, counts: Counts) -> Self {
        let (p, r, f1, undefined) = counts.scores();
        Self {
            level,
            counts,
            p,
            r,
            f1,
            undefined,
            cases: Vec::new(),
        }
    }
}

pub fn pixel_score(pred: &CoverageMask, truth: &CoverageMask) -> Result<EvalReport> {
    if pred.dimensions() != truth.dimensions() {
        return Err(invalid(format!(
            "prediction is {:?} but truth is {:?}",
            pred.dimensions(),
            truth.dimensions()
        )));
    }
    let mut c = Counts::default();
    for (&a, &t) in pred.data().iter().zip(truth.data()) {
        match (a, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            _ => {}
        }
    }
    Ok(EvalReport::from_counts(Level::Pixel, c))
}

/// Scores `(predicted_forged, actually_forged)` decisions.
pub fn image_score(decisions: &[(bool, bool)]) -> Result<EvalReport> {
    if decisions.is_empty() {
        return Err(invalid("image_score needs at least one decision"));
    }
    let mut c = Counts::default();
    for &(pred, actual) in decisions {
        match (pred, actual) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            _ => {}
        }
    }
    Ok(EvalReport::from_counts(Level::Image, c))
}

pub const GREEN: [u8; 3] = [0, 255, 0];
pub const RED: [u8; 3] = [255, 0, 0];
pub const WHITE: [u8; 3] = [255, 255, 255];

/// Green for correct detections, red for false ones, white for missed truth,
/// the base image elsewhere.
pub fn render_tricolor(pred: &CoverageMask, truth: &CoverageMask, base: &GrayImage) -> Result<image::RgbImage> {
    let (w, h) = base.dimensions();
    if pred.dimensions() != (w, h) || truth.dimensions() != (w, h) {
        return Err(invalid("masks and base image must share dimensions"));
    }
    Ok(image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        image::Rgb(match (pred.get(x, y), truth.get(x, y)) {
            (true, true) => GREEN,
            (true, false) => RED,
            (false, true) => WHITE,
            (false, false) => {
                let v = base.get(x, y).round().clamp(0.0, 255.0) as u8;
                [v, v, v]
            }
        })
    }))
}

/// Base image with masked pixels tinted red.
pub fn render_overlay(mask: &CoverageMask, base: &GrayImage) -> Result<image::RgbImage> {
    let (w, h) = base.dimensions();
    if mask.dimensions() != (w, h) {
        return Err(invalid("mask and base image must share dimensions"));
    }
    Ok(image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let v = base.get(x as usize, y as usize).round().clamp(0.0, 255.0) as u8;
        if mask.get(x as usize, y as usize) {
            image::Rgb([128 + v / 2, v / 2, v / 2])
        } else {
            image::Rgb([v, v, v])
        }
    }))
}

/// A case as handed to a [`Detector`]; `truth` is all clear for controls.
pub struct LoadedCase {
    pub id: String,
    pub forged: GrayImage,
    pub truth: CoverageMask,
}

pub trait Detector: Sync {
    fn detect_mask(&self, case: &LoadedCase) -> Result<CoverageMask>;
}

impl Detector for Config {
    fn detect_mask(&self, case: &LoadedCase) -> Result<CoverageMask> {
        Ok(detect(&case.forged, self)?.mask)
    }
}

/// Returns the ground truth; a perfect detector for checking the harness.
pub struct OracleDetector;

impl Detector for OracleDetector {
    fn detect_mask(&self, case: &LoadedCase) -> Result<CoverageMask> {
        Ok(case.truth.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub scenario: Scenario,
    pub attack_param: Option<f64>,
    pub mean_p: f64,
    pub mean_r: f64,
    pub mean_f1: f64,
    pub cases: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    /// Mean per-case p, r, F1 over forged cases, pooled pixel counts and
    /// every case result.
    pub pixel: EvalReport,
    pub image: EvalReport,
    pub curves: Vec<CurveRow>,
}

impl BatchReport {
    /// The pixel report with the image-level report nested under `image`.
    pub fn to_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(&self.pixel)?;
        let mut image = serde_json::to_value(&self.image)?;
        if let Some(obj) = image.as_object_mut() {
            obj.remove("cases");
        }
        v["image"] = image;
        Ok(serde_json::to_string_pretty(&v)?)
    }

    pub fn curves_csv(&self) -> String {
        let mut out = String::from("scenario,attack_param,mean_p,mean_r,mean_f1\n");
        for row in &self.curves {
            let param = row.attack_param.map_or_else(|| "none".to_string(), |p| p.to_string());
            let _ = writeln!(
                out,
                "{},{param},{:.4},{:.4},{:.4}",
                row.scenario, row.mean_p, row.mean_r, row.mean_f1
            );
        }
        out
    }

    pub fn write(&self, report: &Path, curves: &Path) -> Result<()> {
        fs::write(report, self.to_json()?).map_err(io_err(report))?;
        fs::write(curves, self.curves_csv()).map_err(io_err(curves))
    }
}

fn load_case(root: &Path, rec: &CaseRecord) -> Result<LoadedCase> {
    let forged = load_grayscale(root.join(&rec.forged))?;
    let truth = match &rec.truth {
        Some(t) => CoverageMask::load_png(root.join(t))?,
        None => CoverageMask::new(forged.width(), forged.height()),
    };
    if truth.dimensions() != forged.dimensions() {
        return Err(invalid(format!("case {}: truth and image sizes differ", rec.id)));
    }
    Ok(LoadedCase {
        id: rec.id.clone(),
        forged,
        truth,
    })
}

fn run_case(root: &Path, rec: &CaseRecord, detector: &dyn Detector) -> (CaseResult, Counts) {
    let outcome = load_case(root, rec).and_then(|case| {
        let pred = detector.detect_mask(&case)?;
        let score = pixel_score(&pred, &case.truth)?;
        Ok((score, !pred.is_empty(), !case.truth.is_empty()))
    });
    let mut res = CaseResult {
        id: rec.id.clone(),
        p: 0.0,
        r: 0.0,
        f1: 0.0,
        error: None,
        spec: rec.spec,
        flagged: false,
        forged: false,
    };
    match outcome {
        Ok((score, flagged, forged)) => {
            res.p = score.p;
            res.r = score.r;
            res.f1 = score.f1;
            res.flagged = flagged;
            res.forged = forged;
            (res, score.counts)
        }
        Err(e) => {
            res.error = Some(e.to_string());
            (res, Counts::default())
        }
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Detects every case of a manifest on a pool of `jobs` threads (0 picks the
/// rayon default) and aggregates the scores. Unreadable cases are reported
/// with an error and left out of the aggregates.
pub fn batch_evaluate(manifest: &Path, detector: &dyn Detector, jobs: usize) -> Result<BatchReport> {
    let m = Manifest::load(manifest)?;
    if m.cases.is_empty() {
        return Err(Error::NoData(format!("{} lists no cases", manifest.display())));
    }
    let root = manifest.parent().unwrap_or(Path::new("."));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    let mut results: Vec<(CaseResult, Counts)> =
        pool.install(|| m.cases.par_iter().map(|rec| run_case(root, rec, detector)).collect());
    results.sort_by(|a, b| a.0.id.cmp(&b.0.id));

    let ok: Vec<&(CaseResult, Counts)> = results.iter().filter(|(c, _)| c.error.is_none()).collect();
    let forged: Vec<&(CaseResult, Counts)> = ok.iter().copied().filter(|(c, _)| c.forged).collect();
    let pooled = forged.iter().fold(Counts::default(), |a, (_, c)| Counts {
        tp: a.tp + c.tp,
        fp: a.fp + c.fp,
        fn_: a.fn_ + c.fn_,
    });
    let mut pixel = EvalReport::from_counts(Level::Pixel, pooled);
    if !forged.is_empty() {
        pixel.p = mean(forged.iter().map(|(c, _)| c.p));
        pixel.r = mean(forged.iter().map(|(c, _)| c.r));
        pixel.f1 = mean(forged.iter().map(|(c, _)| c.f1));
    }
    let decisions: Vec<(bool, bool)> = ok.iter().map(|(c, _)| (c.flagged, c.forged)).collect();
    let image = if decisions.is_empty() {
        EvalReport::from_counts(Level::Image, Counts::default())
    } else {
        image_score(&decisions)?
    };

    type Group<'a> = (Scenario, Option<f64>, Vec<&'a CaseResult>);
    let mut groups: BTreeMap<(String, u64), Group> = BTreeMap::new();
    for (c, _) in &forged {
        let param = c.spec.param();
        let key = (Scenario::of(&c.spec).to_string(), param.map_or(0, f64::to_bits));
        groups
            .entry(key)
            .or_insert_with(|| (Scenario::of(&c.spec), param, Vec::new()))
            .2
            .push(c);
    }
    let mut curves: Vec<CurveRow> = groups
        .into_values()
        .map(|(scenario, attack_param, cs)| CurveRow {
            scenario,
            attack_param,
            mean_p: mean(cs.iter().map(|c| c.p)),
            mean_r: mean(cs.iter().map(|c| c.r)),
            mean_f1: mean(cs.iter().map(|c| c.f1)),
            cases: cs.len(),
        })
        .collect();
    curves.sort_by(|a, b| {
        (a.scenario.to_string(), a.attack_param.unwrap_or(f64::MIN))
            .partial_cmp(&(b.scenario.to_string(), b.attack_param.unwrap_or(f64::MIN)))
            .unwrap()
    });

    pixel.cases = results.into_iter().map(|(c, _)| c).collect();
    Ok(BatchReport { pixel, image, curves })
}
