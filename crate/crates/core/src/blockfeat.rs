//! Rotation-robust features of circular domains and the variance-adaptive
//! thresholds used to compare them.

use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::imgcore::{sample_disk, DiskSample, GrayImage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Dct,
    Pcet,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dct" => Ok(Mode::Dct),
            "pcet" => Ok(Mode::Pcet),
            other => Err(Error::Config(format!("unknown block feature mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Dct => "dct",
            Mode::Pcet => "pcet",
        })
    }
}

/// Magnitudes `|M(n, l)|` for `0 <= n, l <= max_order`, row-major in `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct PcetFeature {
    pub max_order: usize,
    pub magnitudes: Vec<f64>,
}

impl PcetFeature {
    pub fn get(&self, n: usize, l: usize) -> f64 {
        self.magnitudes[n * (self.max_order + 1) + l]
    }

    pub fn distance(&self, other: &PcetFeature) -> f64 {
        self.magnitudes
            .iter()
            .zip(&other.magnitudes)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Largest singular value of a domain's DCT coefficient matrix, with the
/// domain's intensity variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DctLambda {
    pub lambda: f64,
    pub variance: f64,
}

/// Polar complex exponential moments of a disk sample.
///
/// The disk is mapped onto the unit disk with the radius `sqrt(count / pi)`,
/// where `count` is the number of lattice offsets of the full disk, so that
/// every pixel covers the area `pi / count` and `|M(0, 0)|` is the mean
/// intensity of an unclipped disk.
pub fn compute_pcet(disk: &DiskSample, max_order: usize) -> Result<PcetFeature> {
    if disk.pixels.len() < 4 {
        return Err(invalid(format!(
            "disk with {} pixels is too small for moments",
            disk.pixels.len()
        )));
    }
    let reach = disk.radius.floor() as i32;
    let r2 = disk.radius * disk.radius;
    let lattice = (-reach..=reach)
        .flat_map(|dy| (-reach..=reach).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| ((dx * dx + dy * dy) as f64) <= r2)
        .count() as f64;
    let norm2 = lattice / PI;
    let area = PI / lattice;
    let k = max_order + 1;
    let mut re = vec![0.0f64; k * k];
    let mut im = vec![0.0f64; k * k];
    for p in &disk.pixels {
        let f = p.value as f64;
        let (dx, dy) = (p.dx as f64, p.dy as f64);
        let rho2 = (dx * dx + dy * dy) / norm2;
        let theta = dy.atan2(dx);
        // the angular kernels average to zero over the center pixel
        let l_max = if p.dx == 0 && p.dy == 0 { 1 } else { k };
        for n in 0..k {
            let radial = -2.0 * PI * n as f64 * rho2;
            for l in 0..l_max {
                let phase = radial - l as f64 * theta;
                let (s, c) = phase.sin_cos();
                re[n * k + l] += f * c;
                im[n * k + l] += f * s;
            }
        }
    }
    let scale = area / PI;
    let magnitudes = re
        .iter()
        .zip(&im)
        .map(|(a, b)| (a * a + b * b).sqrt() * scale)
        .collect();
    Ok(PcetFeature {
        max_order,
        magnitudes,
    })
}

/// Orthonormal DCT-II basis: `c[k][i] = a_k cos(pi (2i + 1) k / 2n)`.
fn dct_basis(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |k, i| {
        let a = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        a * (PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos()
    })
}

/// Two-dimensional orthonormal DCT-II of a square block.
pub fn dct2(block: &DMatrix<f64>) -> DMatrix<f64> {
    let c = dct_basis(block.nrows());
    &c * block * c.transpose()
}

/// Largest singular value of a matrix.
pub fn max_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(0.0f64, |a, &b| a.max(b))
}

/// Square block of side `2 floor(r) + 1` around the disk center holding the
/// disk pixels; corners outside the disk and pixels outside the image are 0.
pub fn disk_block(disk: &DiskSample) -> DMatrix<f64> {
    let reach = disk.radius.floor() as i32;
    let n = (2 * reach + 1) as usize;
    let mut block = DMatrix::zeros(n, n);
    for p in &disk.pixels {
        block[((p.dy + reach) as usize, (p.dx + reach) as usize)] = p.value as f64;
    }
    block
}

pub fn dct_lambda_of(disk: &DiskSample) -> DctLambda {
    DctLambda {
        lambda: max_singular_value(&dct2(&disk_block(disk))),
        variance: disk.variance,
    }
}

pub fn compute_dct_lambda(img: &GrayImage, center: (f64, f64), radius: f64) -> Result<DctLambda> {
    if !(radius >= 1.0) {
        return Err(invalid(format!("radius must be at least 1, got {radius}")));
    }
    let disk = sample_disk(img, center, radius)?;
    Ok(dct_lambda_of(&disk))
}

/// `(K_PCET, K_DCT)` for a variance difference `sigma_s`.
pub fn adaptive_thresholds(sigma_s: f64) -> Result<(f64, f64)> {
    if !(sigma_s >= 0.0) {
        return Err(invalid(format!("variance difference must be >= 0, got {sigma_s}")));
    }
    let k_pcet = if sigma_s <= 0.1 {
        1.0
    } else if sigma_s <= 1.0 {
        25.0
    } else {
        75.0
    };
    let k_dct = if sigma_s <= 1.0 {
        25.0
    } else if sigma_s <= 10.0 {
        50.0
    } else {
        100.0
    };
    Ok((k_pcet, k_dct))
}

#[derive(Clone, Debug, PartialEq)]
pub enum DomainFeature {
    Pcet(PcetFeature),
    Dct(DctLambda),
}

impl DomainFeature {
    pub fn mode(&self) -> Mode {
        match self {
            DomainFeature::Pcet(_) => Mode::Pcet,
            DomainFeature::Dct(_) => Mode::Dct,
        }
    }
}

/// PCET: feature distance below `K_PCET`; DCT: `|lambda_a - lambda_b|` below `K_DCT`.
pub fn domains_match(a: &DomainFeature, b: &DomainFeature, sigma_s: f64) -> Result<bool> {
    let (k_pcet, k_dct) = adaptive_thresholds(sigma_s)?;
    match (a, b) {
        (DomainFeature::Pcet(fa), DomainFeature::Pcet(fb)) => {
            if fa.magnitudes.len() != fb.magnitudes.len() {
                return Err(invalid("moment features of different orders"));
            }
            Ok(fa.distance(fb) < k_pcet)
        }
        (DomainFeature::Dct(la), DomainFeature::Dct(lb)) => Ok((la.lambda - lb.lambda).abs() < k_dct),
        _ => Err(invalid(format!(
            "cannot compare {} feature with {} feature",
            a.mode(),
            b.mode()
        ))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockParams {
    pub mode: Mode,
    pub pcet_max_order: usize,
    /// Factor applied to `[0, 255]` intensities before taking the variance
    /// difference; `1/255` measures it on the unit scale.
    pub sigma_scale: f64,
}

impl Default for BlockParams {
    fn default() -> Self {
        Self {
            mode: Mode::Dct,
            pcet_max_order: 3,
            sigma_scale: 1.0,
        }
    }
}

impl BlockParams {
    pub fn feature(&self, disk: &DiskSample) -> Result<DomainFeature> {
        Ok(match self.mode {
            Mode::Dct => DomainFeature::Dct(dct_lambda_of(disk)),
            Mode::Pcet => DomainFeature::Pcet(compute_pcet(disk, self.pcet_max_order)?),
        })
    }

    /// Variance difference of two disks on the configured intensity scale.
    pub fn sigma_s(&self, a: &DiskSample, b: &DiskSample) -> f64 {
        (a.variance - b.variance).abs() * self.sigma_scale * self.sigma_scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::smooth_noise;
    use proptest::prelude::*;

    /// Direct O(n^4) orthonormal DCT-II.
    fn dct_oracle(b: &DMatrix<f64>) -> DMatrix<f64> {
        let n = b.nrows();
        let a = |k: usize| if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        DMatrix::from_fn(n, n, |u, v| {
            let mut s = 0.0;
            for y in 0..n {
                for x in 0..n {
                    s += b[(y, x)]
                        * (PI * (2 * y + 1) as f64 * u as f64 / (2 * n) as f64).cos()
                        * (PI * (2 * x + 1) as f64 * v as f64 / (2 * n) as f64).cos();
                }
            }
            a(u) * a(v) * s
        })
    }

    #[test]
    fn dct_matches_direct_sum() {
        let b = DMatrix::from_fn(7, 7, |i, j| ((i * 13 + j * 7) % 11) as f64);
        let fast = dct2(&b);
        let slow = dct_oracle(&b);
        assert!((fast - slow).abs().max() < 1e-9);
    }

    #[test]
    fn constant_block_lambda() {
        for &(c, r) in &[(100.0f32, 1.5), (37.0, 1.0)] {
            let img = GrayImage::filled(9, 9, c);
            let l = compute_dct_lambda(&img, (4.0, 4.0), r).unwrap();
            let n = 2.0 * r.floor() + 1.0;
            if r >= 1.5 {
                assert!((l.lambda - n * c as f64).abs() < 1e-9, "{}", l.lambda);
            }
            assert_eq!(l.variance, 0.0);
        }
        let zero = GrayImage::filled(9, 9, 0.0);
        assert_eq!(compute_dct_lambda(&zero, (4.0, 4.0), 2.5).unwrap().lambda, 0.0);
        assert!(compute_dct_lambda(&zero, (4.0, 4.0), 0.5).is_err());
        assert!(compute_dct_lambda(&zero, (40.0, 4.0), 2.0).is_err());
    }

    #[test]
    fn lambda_equals_singular_value_of_raw_block() {
        // orthonormal transforms keep singular values
        let img = smooth_noise(40, 40, 2.0, 9);
        let disk = sample_disk(&img, (20.0, 20.0), 7.5).unwrap();
        let block = disk_block(&disk);
        let direct = max_singular_value(&block);
        let l = dct_lambda_of(&disk).lambda;
        assert!((l - direct).abs() < 1e-6 * direct);
    }

    #[test]
    fn lambda_small_drift_under_rotation() {
        let img = smooth_noise(101, 101, 4.0, 10);
        let rot = crate::test_support::rotate_about_center(&img, 15f64.to_radians());
        let a = compute_dct_lambda(&img, (50.0, 50.0), 1.5).unwrap().lambda;
        let b = compute_dct_lambda(&rot, (50.0, 50.0), 1.5).unwrap().lambda;
        assert!((a - b).abs() / a <= 0.05);
    }

    #[test]
    fn threshold_branches() {
        let table = [
            (0.0, 1.0, 25.0),
            (0.05, 1.0, 25.0),
            (0.1, 1.0, 25.0),
            (0.1000001, 25.0, 25.0),
            (0.5, 25.0, 25.0),
            (1.0, 25.0, 25.0),
            (1.0000001, 75.0, 50.0),
            (5.0, 75.0, 50.0),
            (10.0, 75.0, 50.0),
            (10.000001, 75.0, 100.0),
            (20.0, 75.0, 100.0),
        ];
        for (s, kp, kd) in table {
            assert_eq!(adaptive_thresholds(s).unwrap(), (kp, kd), "sigma_s = {s}");
        }
        assert!(adaptive_thresholds(-0.1).is_err());
        assert!(adaptive_thresholds(f64::NAN).is_err());
    }

    #[test]
    fn dct_match_examples() {
        let d = |l: f64| DomainFeature::Dct(DctLambda { lambda: l, variance: 0.0 });
        assert!(domains_match(&d(100.0), &d(112.0), 0.5).unwrap());
        assert!(!domains_match(&d(100.0), &d(140.0), 0.5).unwrap());
        assert!(!domains_match(&d(100.0), &d(125.0), 0.5).unwrap());
        let p = DomainFeature::Pcet(PcetFeature {
            max_order: 0,
            magnitudes: vec![1.0],
        });
        assert!(domains_match(&p, &p, 0.0).unwrap());
        assert!(domains_match(&p, &d(1.0), 0.0).is_err());
    }

    #[test]
    fn constant_disk_moments() {
        let c = 120.0f32;
        let img = GrayImage::filled(41, 41, c);
        let disk = sample_disk(&img, (20.0, 20.0), 15.5).unwrap();
        let f = compute_pcet(&disk, 3).unwrap();
        let c = c as f64;
        assert!((f.get(0, 0) - c).abs() <= 1e-2 * c, "{}", f.get(0, 0));
        for n in 0..4 {
            for l in 0..4 {
                if (n, l) != (0, 0) {
                    assert!(f.get(n, l) <= 1e-2 * c, "M({n},{l}) = {}", f.get(n, l));
                }
            }
        }
    }

    #[test]
    fn offset_changes_only_dc_moment() {
        let img = smooth_noise(41, 41, 2.0, 11);
        let shifted = GrayImage::from_fn(41, 41, |x, y| img.get(x, y) + 10.0);
        let a = compute_pcet(&sample_disk(&img, (20.0, 20.0), 15.5).unwrap(), 3).unwrap();
        let b = compute_pcet(&sample_disk(&shifted, (20.0, 20.0), 15.5).unwrap(), 3).unwrap();
        // the offset adds the moment of a constant disk, tiny off the DC term
        assert!((b.get(0, 0) - a.get(0, 0) - 10.0).abs() < 0.1);
        for i in 1..16 {
            assert!((a.magnitudes[i] - b.magnitudes[i]).abs() < 0.1);
        }
    }

    #[test]
    fn quarter_turn_invariance() {
        let img = smooth_noise(41, 41, 2.0, 12);
        let rot = GrayImage::from_fn(41, 41, |x, y| img.get(y, 40 - x));
        let a = compute_pcet(&sample_disk(&img, (20.0, 20.0), 15.5).unwrap(), 3).unwrap();
        let b = compute_pcet(&sample_disk(&rot, (20.0, 20.0), 15.5).unwrap(), 3).unwrap();
        let norm = a.magnitudes.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(a.distance(&b) <= 1e-9 * norm);
    }

    #[test]
    fn tiny_disk_is_rejected() {
        let img = GrayImage::filled(9, 9, 1.0);
        let disk = sample_disk(&img, (0.0, 0.0), 1.0).unwrap();
        assert!(compute_pcet(&disk, 3).is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("DCT".parse::<Mode>().unwrap(), Mode::Dct);
        assert_eq!("pcet".parse::<Mode>().unwrap(), Mode::Pcet);
        assert!("zernike".parse::<Mode>().is_err());
    }

    proptest! {
        #[test]
        fn lambda_transpose_invariant(seed in 0u64..1000, r in 1.0f64..9.0) {
            let img = smooth_noise(25, 25, 1.5, seed);
            let t = GrayImage::from_fn(25, 25, |x, y| img.get(y, x));
            let a = compute_dct_lambda(&img, (12.0, 12.0), r).unwrap().lambda;
            let b = compute_dct_lambda(&t, (12.0, 12.0), r).unwrap().lambda;
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }

        #[test]
        fn domains_match_symmetric(la in 0.0f64..500.0, lb in 0.0f64..500.0, s in 0.0f64..20.0) {
            let a = DomainFeature::Dct(DctLambda { lambda: la, variance: 0.0 });
            let b = DomainFeature::Dct(DctLambda { lambda: lb, variance: 0.0 });
            prop_assert_eq!(domains_match(&a, &b, s).unwrap(), domains_match(&b, &a, s).unwrap());
        }

        #[test]
        fn moment_rotation_by_thirty_degrees(seed in 0u64..50, k in 1u32..12) {
            let img = smooth_noise(81, 81, 4.0, seed);
            let rot = crate::test_support::rotate_about_center(&img, (30.0 * k as f64).to_radians());
            let a = compute_pcet(&sample_disk(&img, (40.0, 40.0), 15.5).unwrap(), 3).unwrap();
            let b = compute_pcet(&sample_disk(&rot, (40.0, 40.0), 15.5).unwrap(), 3).unwrap();
            let norm = a.magnitudes.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(a.distance(&b) <= 0.02 * norm, "{} vs {}", a.distance(&b), norm);
        }
    }
}
