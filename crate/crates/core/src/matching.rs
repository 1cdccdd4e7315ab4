//! Generalized 2NN matching inside one descriptor family.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::keypoint::{Descriptor, KeypointKind};

/// Sorted squared distances from descriptor `origin` to its nearest others.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceRow {
    pub origin: usize,
    /// `(squared distance, index)` ascending by distance, then index.
    pub entries: Vec<(f32, usize)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub a: (f32, f32),
    pub b: (f32, f32),
    pub kind: KeypointKind,
    pub d2: f32,
}

impl MatchPair {
    pub fn length(&self) -> f32 {
        ((self.a.0 - self.b.0).powi(2) + (self.a.1 - self.b.1).powi(2)).sqrt()
    }

    pub fn flipped(&self) -> Self {
        Self {
            a: self.b,
            b: self.a,
            ..*self
        }
    }
}

pub type MatchSet = Vec<MatchPair>;

#[inline]
pub fn squared_distance(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn row_unchecked(i: usize, set: &[Descriptor], max_neighbors: usize) -> DistanceRow {
    let q = &set[i].vector;
    let mut best: Vec<(f32, usize)> = Vec::with_capacity(max_neighbors + 1);
    for (j, d) in set.iter().enumerate() {
        if j == i {
            continue;
        }
        let d2 = squared_distance(q, &d.vector);
        if best.len() == max_neighbors && d2 >= best[max_neighbors - 1].0 {
            continue;
        }
        let pos = best.partition_point(|&(v, _)| v <= d2);
        best.insert(pos, (d2, j));
        best.truncate(max_neighbors);
    }
    DistanceRow {
        origin: i,
        entries: best,
    }
}

pub fn distance_row(i: usize, set: &[Descriptor], max_neighbors: usize) -> Result<DistanceRow> {
    if set.len() < 2 {
        return Err(invalid("distance row needs at least two descriptors"));
    }
    if i >= set.len() {
        return Err(invalid(format!("index {i} out of range for {} descriptors", set.len())));
    }
    if max_neighbors == 0 {
        return Err(invalid("max_neighbors must be positive"));
    }
    Ok(row_unchecked(i, set, max_neighbors))
}

/// Number of leading candidates accepted by the ratio rule: candidate `j` is
/// accepted while `d[j] / d[j + 1] <= t`, scanning stops at the first ratio
/// above `t`. A ratio of two zero distances counts as 0.
pub fn accepted_prefix(d2: &[f32], t: f32) -> usize {
    let mut n = 0;
    for w in d2.windows(2) {
        let ratio = if w[1] == 0.0 { 0.0 } else { w[0] / w[1] };
        if ratio > t {
            break;
        }
        n += 1;
    }
    n
}

/// g2NN matching inside one family. Each row may contribute up to
/// `max_neighbors` matches; pairs found from both ends are kept once.
pub fn g2nn_match(set: &[Descriptor], t: f32, max_neighbors: usize) -> MatchSet {
    if set.len() < 2 || max_neighbors == 0 {
        return Vec::new();
    }
    let mut pairs: Vec<(usize, usize, f32)> = (0..set.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let row = row_unchecked(i, set, max_neighbors + 1);
            let d2: Vec<f32> = row.entries.iter().map(|e| e.0).collect();
            let n = accepted_prefix(&d2, t).min(max_neighbors);
            row.entries[..n]
                .iter()
                .map(|&(d, j)| (i.min(j), i.max(j), d))
                .collect::<Vec<_>>()
        })
        .collect();
    pairs.sort_by_key(|x| (x.0, x.1));
    pairs.dedup_by(|x, y| x.0 == y.0 && x.1 == y.1);
    pairs
        .into_iter()
        .map(|(i, j, d2)| {
            let (ka, kb) = (&set[i].keypoint, &set[j].keypoint);
            MatchPair {
                a: (ka.x, ka.y),
                b: (kb.x, kb.y),
                kind: ka.kind,
                d2,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchParams {
    pub t_sift: f32,
    pub t_lpsd: f32,
    pub max_neighbors: usize,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            t_sift: 0.6,
            t_lpsd: 0.1,
            max_neighbors: 10,
        }
    }
}

/// SIFT matches followed by LPSD matches; the families are never mixed.
pub fn match_both(sift: &[Descriptor], lpsd: &[Descriptor], params: &MatchParams) -> MatchSet {
    let mut out = g2nn_match(sift, params.t_sift, params.max_neighbors);
    out.extend(g2nn_match(lpsd, params.t_lpsd, params.max_neighbors));
    out
}

#[derive(Serialize)]
struct MatchRecord {
    ax: f32,
    ay: f32,
    bx: f32,
    by: f32,
    kind: KeypointKind,
    d2: f32,
}

/// Writes one JSON object per pair: `{ax, ay, bx, by, kind, d2}`.
pub fn write_matches_jsonl<W: Write>(out: &mut W, pairs: &[MatchPair]) -> Result<()> {
    for p in pairs {
        let rec = MatchRecord {
            ax: p.a.0,
            ay: p.a.1,
            bx: p.b.0,
            by: p.b.1,
            kind: p.kind,
            d2: p.d2,
        };
        serde_json::to_writer(&mut *out, &rec)?;
        out.write_all(b"\n").map_err(serde_json::Error::io)?;
    }
    Ok(())
}
