//! Geometric filtering of matches: a minimum-length test followed by
//! repeated RANSAC extraction of affine-consistent groups.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::matching::{MatchPair, MatchSet};

/// `p -> A p + t` in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineModel {
    pub linear: [[f64; 2]; 2],
    pub translation: [f64; 2],
}

impl AffineModel {
    pub const IDENTITY: AffineModel = AffineModel {
        linear: [[1.0, 0.0], [0.0, 1.0]],
        translation: [0.0, 0.0],
    };

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            translation: [tx, ty],
            ..Self::IDENTITY
        }
    }

    #[inline]
    pub fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        let [[a, b], [c, d]] = self.linear;
        (
            a * p.0 + b * p.1 + self.translation[0],
            c * p.0 + d * p.1 + self.translation[1],
        )
    }

    pub fn det(&self) -> f64 {
        let [[a, b], [c, d]] = self.linear;
        a * d - b * c
    }

    pub fn is_valid(&self) -> bool {
        self.det().abs() > 1e-6
            && self.linear.iter().flatten().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite())
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det.abs() <= 1e-12 {
            return None;
        }
        let [[a, b], [c, d]] = self.linear;
        let inv = [[d / det, -b / det], [-c / det, a / det]];
        let [tx, ty] = self.translation;
        Some(Self {
            linear: inv,
            translation: [
                -(inv[0][0] * tx + inv[0][1] * ty),
                -(inv[1][0] * tx + inv[1][1] * ty),
            ],
        })
    }

    /// Least-squares fit of `src[i] -> dst[i]`; needs three non-collinear points.
    pub fn fit(src: &[(f64, f64)], dst: &[(f64, f64)]) -> Option<Self> {
        if src.len() < 3 || src.len() != dst.len() {
            return None;
        }
        // normal equations on centered coordinates
        let n = src.len() as f64;
        let mean = |pts: &[(f64, f64)]| {
            let (sx, sy) = pts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
            (sx / n, sy / n)
        };
        let (ms, md) = (mean(src), mean(dst));
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        let (mut ux, mut uy, mut vx, mut vy) = (0.0, 0.0, 0.0, 0.0);
        for (s, d) in src.iter().zip(dst) {
            let (x, y) = (s.0 - ms.0, s.1 - ms.1);
            let (u, v) = (d.0 - md.0, d.1 - md.1);
            sxx += x * x;
            sxy += x * y;
            syy += y * y;
            ux += u * x;
            uy += u * y;
            vx += v * x;
            vy += v * y;
        }
        let det = sxx * syy - sxy * sxy;
        if det.abs() <= 1e-9 * (sxx * syy).max(1.0) {
            return None;
        }
        let a = (ux * syy - uy * sxy) / det;
        let b = (uy * sxx - ux * sxy) / det;
        let c = (vx * syy - vy * sxy) / det;
        let d = (vy * sxx - vx * sxy) / det;
        let model = Self {
            linear: [[a, b], [c, d]],
            translation: [md.0 - a * ms.0 - b * ms.1, md.1 - c * ms.0 - d * ms.1],
        };
        model.is_valid().then_some(model)
    }

    /// Distance between `model(a)` and `b`.
    pub fn residual(&self, pair: &MatchPair) -> f64 {
        let p = self.apply((pair.a.0 as f64, pair.a.1 as f64));
        ((p.0 - pair.b.0 as f64).powi(2) + (p.1 - pair.b.1 as f64).powi(2)).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InlierGroup {
    pub model: AffineModel,
    /// Pairs oriented so that `model(a)` lands on `b`.
    pub pairs: Vec<MatchPair>,
}

/// A surviving match with the model of the group that kept it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilteredPair {
    pub pair: MatchPair,
    pub group: usize,
    pub model: AffineModel,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeoParams {
    pub min_distance: f64,
    pub min_inliers: usize,
    pub epsilon: f64,
    pub max_rounds: usize,
    pub seed: u64,
}

impl Default for GeoParams {
    fn default() -> Self {
        Self {
            min_distance: 50.0,
            min_inliers: 6,
            epsilon: 3.0,
            max_rounds: 2000,
            seed: 42,
        }
    }
}

/// Drops pairs whose endpoints are closer than `s` pixels.
pub fn spatial_filter(pairs: &[MatchPair], s: f64) -> MatchSet {
    pairs
        .iter()
        .filter(|p| p.length() as f64 >= s)
        .copied()
        .collect()
}

/// Orients every pair along the principal axis of the displacement field so
/// that pairs of one cloned region tend to point the same way.
fn orient(pairs: &[MatchPair]) -> Vec<MatchPair> {
    let (mut sxx, mut sxy, mut syy) = (0.0f64, 0.0f64, 0.0f64);
    for p in pairs {
        let (dx, dy) = ((p.b.0 - p.a.0) as f64, (p.b.1 - p.a.1) as f64);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    // major eigenvector of the 2x2 scatter matrix
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let (uy, ux) = theta.sin_cos();
    pairs
        .iter()
        .map(|p| {
            let proj = (p.b.0 - p.a.0) as f64 * ux + (p.b.1 - p.a.1) as f64 * uy;
            let lex = (p.a.0, p.a.1) <= (p.b.0, p.b.1);
            if proj > 1e-9 || (proj.abs() <= 1e-9 && lex) {
                *p
            } else {
                p.flipped()
            }
        })
        .collect()
}

fn triangle_area(p: [(f64, f64); 3]) -> f64 {
    0.5 * ((p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1)).abs()
}

fn pt(p: (f32, f32)) -> (f64, f64) {
    (p.0 as f64, p.1 as f64)
}

/// Inliers of `model` in either direction, oriented so that `model(a) ~ b`.
fn consensus(model: &AffineModel, inverse: Option<&AffineModel>, pairs: &[MatchPair], eps: f64) -> Vec<usize> {
    pairs
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            model.residual(p) <= eps || inverse.is_some_and(|inv| inv.residual(p) <= eps)
        })
        .map(|(i, _)| i)
        .collect()
}

fn oriented_inliers(model: &AffineModel, pairs: &[MatchPair], idx: &[usize]) -> Vec<MatchPair> {
    idx.iter()
        .map(|&i| {
            let p = pairs[i];
            let f = p.flipped();
            if model.residual(&p) <= model.residual(&f) {
                p
            } else {
                f
            }
        })
        .collect()
}

fn refit(pairs: &[MatchPair]) -> Option<AffineModel> {
    let src: Vec<_> = pairs.iter().map(|p| pt(p.a)).collect();
    let dst: Vec<_> = pairs.iter().map(|p| pt(p.b)).collect();
    AffineModel::fit(&src, &dst)
}

const MIN_SAMPLE_AREA: f64 = 1.0;
const CONFIDENCE: f64 = 0.995;

/// Best model on `pairs` by random three-pair sampling, with a short
/// least-squares polish of the winner.
fn best_model(pairs: &[MatchPair], eps: f64, max_rounds: usize, rng: &mut ChaCha8Rng) -> Option<(AffineModel, Vec<usize>)> {
    let n = pairs.len();
    let mut best: Option<(AffineModel, Vec<usize>)> = None;
    let mut needed = max_rounds;
    let mut round = 0;
    while round < needed.min(max_rounds) {
        round += 1;
        let pick = sample(rng, n, 3);
        let s: Vec<&MatchPair> = pick.iter().map(|i| &pairs[i]).collect();
        let src = [pt(s[0].a), pt(s[1].a), pt(s[2].a)];
        let dst = [pt(s[0].b), pt(s[1].b), pt(s[2].b)];
        if triangle_area(src) < MIN_SAMPLE_AREA || triangle_area(dst) < MIN_SAMPLE_AREA {
            continue;
        }
        let Some(model) = AffineModel::fit(&src, &dst) else {
            continue;
        };
        let inv = model.inverse();
        let inliers = consensus(&model, inv.as_ref(), pairs, eps);
        if best.as_ref().is_none_or(|b| inliers.len() > b.1.len()) {
            let frac = inliers.len() as f64 / n as f64;
            let miss = 1.0 - frac.powi(3);
            needed = if miss <= 0.0 {
                0
            } else {
                ((1.0 - CONFIDENCE).ln() / miss.ln()).ceil().max(1.0) as usize
            };
            best = Some((model, inliers));
        }
    }
    let (mut model, mut inliers) = best?;
    for _ in 0..3 {
        let oriented = oriented_inliers(&model, pairs, &inliers);
        let Some(next) = refit(&oriented) else { break };
        let inv = next.inverse();
        let next_inliers = consensus(&next, inv.as_ref(), pairs, eps);
        if next_inliers.len() < inliers.len() {
            break;
        }
        let same = next_inliers == inliers;
        model = next;
        inliers = next_inliers;
        if same {
            break;
        }
    }
    // keep only pairs that the final model maps within tolerance after orientation
    let inliers = inliers
        .into_iter()
        .filter(|&i| model.residual(&pairs[i]).min(model.residual(&pairs[i].flipped())) <= eps)
        .collect();
    Some((model, inliers))
}

/// Repeatedly extracts the largest affine-consistent group until the best
/// group has fewer than `min_inliers` pairs.
pub fn ransac_iterate(
    pairs: &[MatchPair],
    min_inliers: usize,
    epsilon: f64,
    max_rounds: usize,
    seed: u64,
) -> Result<Vec<InlierGroup>> {
    if min_inliers < 3 {
        return Err(invalid(format!("inlier threshold must be at least 3, got {min_inliers}")));
    }
    if !(epsilon > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {epsilon}")));
    }
    let mut remaining = orient(pairs);
    let mut groups = Vec::new();
    while remaining.len() >= 3.max(min_inliers) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(groups.len() as u64));
        let Some((model, inliers)) = best_model(&remaining, epsilon, max_rounds, &mut rng) else {
            break;
        };
        if inliers.len() < min_inliers {
            break;
        }
        let members = oriented_inliers(&model, &remaining, &inliers);
        let mut keep = vec![true; remaining.len()];
        for &i in &inliers {
            keep[i] = false;
        }
        let mut k = keep.iter();
        remaining.retain(|_| *k.next().unwrap());
        groups.push(InlierGroup {
            model,
            pairs: members,
        });
    }
    Ok(groups)
}

/// Length filter then grouped RANSAC; returns every grouped pair tagged with
/// its group model.
pub fn filter_matches(pairs: &[MatchPair], params: &GeoParams) -> Result<Vec<FilteredPair>> {
    let kept = spatial_filter(pairs, params.min_distance);
    let groups = ransac_iterate(
        &kept,
        params.min_inliers,
        params.epsilon,
        params.max_rounds,
        params.seed,
    )?;
    Ok(groups
        .into_iter()
        .enumerate()
        .flat_map(|(g, group)| {
            let model = group.model;
            group.pairs.into_iter().map(move |pair| FilteredPair {
                pair,
                group: g,
                model,
            })
        })
        .collect())
}
