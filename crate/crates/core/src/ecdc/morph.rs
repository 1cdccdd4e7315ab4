//! Binary morphology with a disk structuring element, evaluated as row spans
//! over per-row prefix counts.

use super::CoverageMask;
use crate::error::{invalid, Result};

/// Half-widths of the disk rows `dy = -r..=r`.
fn disk_spans(radius: usize) -> Vec<(i64, i64)> {
    let r = radius as i64;
    (-r..=r)
        .map(|dy| (dy, (((r * r - dy * dy) as f64).sqrt()).floor() as i64))
        .collect()
}

fn row_prefix(mask: &CoverageMask) -> Vec<Vec<u32>> {
    let w = mask.width();
    (0..mask.height())
        .map(|y| {
            let mut p = vec![0u32; w + 1];
            for x in 0..w {
                p[x + 1] = p[x] + mask.get(x, y) as u32;
            }
            p
        })
        .collect()
}

/// `out(x, y)` is set when the structuring element centered there hits any set
/// pixel; pixels outside the mask count as clear.
pub fn dilate(mask: &CoverageMask, radius: usize) -> CoverageMask {
    let (w, h) = mask.dimensions();
    let prefix = row_prefix(mask);
    let spans = disk_spans(radius);
    CoverageMask::from_fn(w, h, |x, y| {
        spans.iter().any(|&(dy, hw)| {
            let yy = y as i64 + dy;
            if yy < 0 || yy >= h as i64 {
                return false;
            }
            let x0 = (x as i64 - hw).max(0) as usize;
            let x1 = (x as i64 + hw + 1).min(w as i64) as usize;
            let p = &prefix[yy as usize];
            p[x1] > p[x0]
        })
    })
}

/// `out(x, y)` is set when every pixel under the structuring element is set;
/// pixels outside the mask count as set.
pub fn erode(mask: &CoverageMask, radius: usize) -> CoverageMask {
    let (w, h) = mask.dimensions();
    let prefix = row_prefix(mask);
    let spans = disk_spans(radius);
    CoverageMask::from_fn(w, h, |x, y| {
        spans.iter().all(|&(dy, hw)| {
            let yy = y as i64 + dy;
            if yy < 0 || yy >= h as i64 {
                return true;
            }
            let x0 = (x as i64 - hw).max(0) as usize;
            let x1 = (x as i64 + hw + 1).min(w as i64) as usize;
            let p = &prefix[yy as usize];
            (p[x1] - p[x0]) as usize == x1 - x0
        })
    })
}

/// Morphological closing (dilation then erosion) with a disk of `radius`.
pub fn morph_refine(mask: &CoverageMask, radius: usize) -> Result<CoverageMask> {
    if radius < 1 {
        return Err(invalid("closing radius must be at least 1"));
    }
    if mask.is_empty() {
        return Ok(mask.clone());
    }
    Ok(erode(&dilate(mask, radius), radius))
}

/// Closing radius for an image: `max(3, round(0.01 max(width, height)))`.
pub fn auto_morph_radius(width: usize, height: usize) -> usize {
    ((0.01 * width.max(height) as f64).round() as usize).max(3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn disk(w: usize, h: usize, c: (i64, i64), r: f64) -> CoverageMask {
        let mut m = CoverageMask::new(w, h);
        m.paint_disk(c, r);
        m
    }

    /// Closing by direct definition over the structuring element offsets.
    fn closing_oracle(m: &CoverageMask, r: usize) -> CoverageMask {
        let ri = r as i64;
        let offs: Vec<(i64, i64)> = (-ri..=ri)
            .flat_map(|dy| (-ri..=ri).map(move |dx| (dx, dy)))
            .filter(|&(dx, dy)| dx * dx + dy * dy <= ri * ri)
            .collect();
        let (w, h) = (m.width() as i64, m.height() as i64);
        let inside = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h;
        let d = CoverageMask::from_fn(m.width(), m.height(), |x, y| {
            offs.iter().any(|&(dx, dy)| {
                let (xx, yy) = (x as i64 + dx, y as i64 + dy);
                inside(xx, yy) && m.get(xx as usize, yy as usize)
            })
        });
        CoverageMask::from_fn(m.width(), m.height(), |x, y| {
            offs.iter().all(|&(dx, dy)| {
                let (xx, yy) = (x as i64 + dx, y as i64 + dy);
                !inside(xx, yy) || d.get(xx as usize, yy as usize)
            })
        })
    }

    #[test]
    fn hole_is_filled() {
        let mut m = disk(40, 40, (20, 20), 10.0);
        m.set(20, 20, false);
        let c = morph_refine(&m, 3).unwrap();
        assert!(c.get(20, 20));
    }

    #[test]
    fn empty_stays_empty() {
        let m = CoverageMask::new(30, 20);
        assert!(morph_refine(&m, 3).unwrap().is_empty());
        assert!(morph_refine(&m, 0).is_err());
    }

    #[test]
    fn close_disks_merge() {
        // radius-5 disks centered 12 apart leave a 2 px gap
        let mut m = disk(40, 30, (10, 15), 5.0);
        m.union_with(&disk(40, 30, (22, 15), 5.0)).unwrap();
        assert!(!m.get(16, 15));
        let c = morph_refine(&m, 3).unwrap();
        assert!((10..=22).all(|x| c.get(x, 15)));
    }

    #[test]
    fn radius_rule() {
        assert_eq!(auto_morph_radius(512, 512), 5);
        assert_eq!(auto_morph_radius(100, 80), 3);
        assert_eq!(auto_morph_radius(1500, 1000), 15);
    }

    proptest! {
        #[test]
        fn matches_oracle_and_is_idempotent(
            bits in prop::collection::vec(prop::bool::weighted(0.15), 24 * 18),
            r in 1usize..4,
        ) {
            let m = CoverageMask::from_fn(24, 18, |x, y| bits[y * 24 + x]);
            let c = morph_refine(&m, r).unwrap();
            prop_assert_eq!(&c, &closing_oracle(&m, r));
            prop_assert_eq!(morph_refine(&c, r).unwrap(), c.clone());
            // closing is extensive
            prop_assert!(m.data().iter().zip(c.data()).all(|(a, b)| !*a || *b));
        }
    }
}
