//! Detector configuration and its flat `key = value` text form.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Unknown keys are rejected. `morph.radius` and `sift.octaves` accept
//! `auto`.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::blockfeat::Mode;
use crate::ecdc::EcdcParams;
use crate::error::{io_err, Error, Result};
use crate::geofilter::GeoParams;
use crate::keypoint::KeypointParams;
use crate::matching::MatchParams;

pub const CONFIG_ENV: &str = "ECDC_CONFIG";

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Config {
    pub keypoints: KeypointParams,
    pub matching: MatchParams,
    pub geo: GeoParams,
    pub ecdc: EcdcParams,
}

pub const KEYS: &[&str] = &[
    "g2nn.t_sift",
    "g2nn.t_lpsd",
    "g2nn.max_neighbors",
    "spatial.s",
    "ransac.n",
    "ransac.epsilon",
    "ransac.max_rounds",
    "ransac.seed",
    "ecdc.r1",
    "ecdc.rm",
    "ecdc.tau",
    "blockfeat.mode",
    "blockfeat.pcet_max_order",
    "blockfeat.sigma_scale",
    "morph.radius",
    "sift.octaves",
    "sift.scales_per_octave",
    "sift.contrast",
    "sift.edge",
    "surf.threshold",
    "surf.octaves",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_auto(key: &str, value: &str) -> Result<Option<usize>> {
    if value.eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn auto_str(v: Option<usize>) -> String {
    v.map_or_else(|| "auto".to_string(), |n| n.to_string())
}

impl Config {
    /// Sets one key from its text value without validating the whole config.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "g2nn.t_sift" => self.matching.t_sift = parse(key, value)?,
            "g2nn.t_lpsd" => self.matching.t_lpsd = parse(key, value)?,
            "g2nn.max_neighbors" => self.matching.max_neighbors = parse(key, value)?,
            "spatial.s" => self.geo.min_distance = parse(key, value)?,
            "ransac.n" => self.geo.min_inliers = parse(key, value)?,
            "ransac.epsilon" => self.geo.epsilon = parse(key, value)?,
            "ransac.max_rounds" => self.geo.max_rounds = parse(key, value)?,
            "ransac.seed" => self.geo.seed = parse(key, value)?,
            "ecdc.r1" => self.ecdc.r1 = parse(key, value)?,
            "ecdc.rm" => self.ecdc.rm = parse(key, value)?,
            "ecdc.tau" => self.ecdc.tau = parse(key, value)?,
            "blockfeat.mode" => self.ecdc.block.mode = value.parse::<Mode>()?,
            "blockfeat.pcet_max_order" => self.ecdc.block.pcet_max_order = parse(key, value)?,
            "blockfeat.sigma_scale" => self.ecdc.block.sigma_scale = parse(key, value)?,
            "morph.radius" => self.ecdc.morph_radius = parse_auto(key, value)?,
            "sift.octaves" => self.keypoints.sift_octaves = parse_auto(key, value)?,
            "sift.scales_per_octave" => self.keypoints.scales_per_octave = parse(key, value)?,
            "sift.contrast" => self.keypoints.sift.contrast = parse(key, value)?,
            "sift.edge" => self.keypoints.sift.edge = parse(key, value)?,
            "surf.threshold" => self.keypoints.surf_threshold = parse(key, value)?,
            "surf.octaves" => self.keypoints.surf_octaves = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "g2nn.t_sift" => self.matching.t_sift.to_string(),
            "g2nn.t_lpsd" => self.matching.t_lpsd.to_string(),
            "g2nn.max_neighbors" => self.matching.max_neighbors.to_string(),
            "spatial.s" => self.geo.min_distance.to_string(),
            "ransac.n" => self.geo.min_inliers.to_string(),
            "ransac.epsilon" => self.geo.epsilon.to_string(),
            "ransac.max_rounds" => self.geo.max_rounds.to_string(),
            "ransac.seed" => self.geo.seed.to_string(),
            "ecdc.r1" => self.ecdc.r1.to_string(),
            "ecdc.rm" => self.ecdc.rm.to_string(),
            "ecdc.tau" => self.ecdc.tau.to_string(),
            "blockfeat.mode" => self.ecdc.block.mode.to_string(),
            "blockfeat.pcet_max_order" => self.ecdc.block.pcet_max_order.to_string(),
            "blockfeat.sigma_scale" => self.ecdc.block.sigma_scale.to_string(),
            "morph.radius" => auto_str(self.ecdc.morph_radius),
            "sift.octaves" => auto_str(self.keypoints.sift_octaves),
            "sift.scales_per_octave" => self.keypoints.scales_per_octave.to_string(),
            "sift.contrast" => self.keypoints.sift.contrast.to_string(),
            "sift.edge" => self.keypoints.sift.edge.to_string(),
            "surf.threshold" => self.keypoints.surf_threshold.to_string(),
            "surf.octaves" => self.keypoints.surf_octaves.to_string(),
            _ => return None,
        })
    }

    /// Checks every setting against the preconditions of the stage using it.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let m = &self.matching;
        for (name, t) in [("g2nn.t_sift", m.t_sift), ("g2nn.t_lpsd", m.t_lpsd)] {
            if !(t > 0.0 && t < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {t}"));
            }
        }
        if m.max_neighbors == 0 {
            return bad("g2nn.max_neighbors must be positive".into());
        }
        let g = &self.geo;
        if !(g.min_distance > 0.0) {
            return bad(format!("spatial.s must be positive, got {}", g.min_distance));
        }
        if g.min_inliers < 3 {
            return bad(format!("ransac.n must be at least 3, got {}", g.min_inliers));
        }
        if !(g.epsilon > 0.0) {
            return bad(format!("ransac.epsilon must be positive, got {}", g.epsilon));
        }
        if g.max_rounds == 0 {
            return bad("ransac.max_rounds must be positive".into());
        }
        let e = &self.ecdc;
        self.ecdc
            .schedule()
            .map_err(|_| Error::Config(format!("invalid radius schedule r1={} rm={} tau={}", e.r1, e.rm, e.tau)))?;
        if e.block.pcet_max_order > 16 {
            return bad(format!("blockfeat.pcet_max_order must be at most 16, got {}", e.block.pcet_max_order));
        }
        if !(e.block.sigma_scale > 0.0) || !e.block.sigma_scale.is_finite() {
            return bad(format!("blockfeat.sigma_scale must be positive, got {}", e.block.sigma_scale));
        }
        if e.morph_radius == Some(0) {
            return bad("morph.radius must be at least 1".into());
        }
        let k = &self.keypoints;
        if k.sift_octaves == Some(0) || k.scales_per_octave == 0 {
            return bad("sift.octaves and sift.scales_per_octave must be positive".into());
        }
        if !(k.sift.contrast >= 0.0) || !(k.sift.edge > 1.0) {
            return bad(format!(
                "sift.contrast must be >= 0 and sift.edge > 1 (got {}, {})",
                k.sift.contrast, k.sift.edge
            ));
        }
        if !(k.surf_threshold >= 0.0) || k.surf_octaves == 0 || k.surf_octaves > 4 {
            return bad(format!(
                "surf.threshold must be >= 0 and surf.octaves in 1..=4 (got {}, {})",
                k.surf_threshold, k.surf_octaves
            ));
        }
        Ok(())
    }

    /// Applies the settings of a config text on top of `self`.
    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected `key = value`", n + 1)));
            };
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.merge_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_text(&text)
    }

    /// Every key with its current value, in a form [`Config::from_text`] reads back.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).unwrap());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = Config::default();
        assert_eq!(c.matching.t_sift, 0.6);
        assert_eq!(c.matching.t_lpsd, 0.1);
        assert_eq!(c.geo.min_distance, 50.0);
        assert_eq!(c.ecdc.r1, 1.5);
        assert_eq!(c.ecdc.rm, 37.5);
        assert_eq!(c.ecdc.tau, 2.0);
        assert_eq!(c.geo.min_inliers, 6);
        assert_eq!(c.geo.epsilon, 3.0);
        assert_eq!(c.geo.max_rounds, 2000);
        assert_eq!(c.geo.seed, 42);
        assert_eq!(c.matching.max_neighbors, 10);
        assert_eq!(c.ecdc.block.mode, Mode::Dct);
        assert_eq!(c.ecdc.morph_radius, None);
        c.validate().unwrap();
    }

    #[test]
    fn round_trip() {
        let mut c = Config::default();
        c.set("blockfeat.mode", "pcet").unwrap();
        c.set("morph.radius", "4").unwrap();
        c.set("g2nn.t_sift", "0.55").unwrap();
        c.set("blockfeat.sigma_scale", "0.0039215686").unwrap();
        let back = Config::from_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(Config::from_text(&Config::default().to_text()).unwrap(), Config::default());
    }

    #[test]
    fn comments_and_errors() {
        let c = Config::from_text("# tuned\n\nransac.n = 8  # stricter\nsift.octaves = auto\n").unwrap();
        assert_eq!(c.geo.min_inliers, 8);
        assert!(Config::from_text("nonsense.key = 1").is_err());
        assert!(Config::from_text("ransac.n 8").is_err());
        assert!(Config::from_text("ransac.n = eight").is_err());
        assert!(Config::from_text("ransac.n = 2").is_err());
        assert!(Config::from_text("g2nn.t_sift = 1.5").is_err());
        assert!(Config::from_text("ecdc.r1 = 40").is_err());
        assert!(Config::from_text("blockfeat.mode = zernike").is_err());
    }
}
