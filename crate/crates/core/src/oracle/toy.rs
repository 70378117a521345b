//! Template-matching stand-in for a thermal pedestrian detector.
//!
//! The box is resampled to the 32x64 template, compared by zero-mean
//! normalized cross-correlation, and squashed through a logistic.

use crate::imaging::{crop_resize_source, decode_pgm, BBox, GrayImage, PixelSource};
use crate::scene::silhouette_part;

use super::{Oracle, OracleError};

pub const TEMPLATE_W: usize = 32;
pub const TEMPLATE_H: usize = 64;

/// Versioned 8-bit template shipped with the crate.
pub const TEMPLATE_ASSET: &[u8] = include_bytes!("../../assets/toy_template_v1.pgm");

/// Relative warmth of the limbs in the template; head and torso are 1.
const LEG_WARMTH: f64 = 0.5;
const TEMPLATE_SUPERSAMPLE: usize = 4;

/// The silhouette averaged over 4x4 subsamples per template pixel.
pub fn procedural_template() -> GrayImage {
    use crate::scene::SILHOUETTE_ASPECT;
    let n = TEMPLATE_SUPERSAMPLE;
    let inv = 1.0 / (n * n) as f64;
    GrayImage::from_fn(TEMPLATE_W, TEMPLATE_H, |i, j| {
        let mut acc = 0.0;
        for sj in 0..n {
            let v = (j as f64 + (sj as f64 + 0.5) / n as f64) / TEMPLATE_H as f64;
            for si in 0..n {
                let u = (i as f64 + (si as f64 + 0.5) / n as f64) / TEMPLATE_W as f64;
                acc += match silhouette_part((u - 0.5) * SILHOUETTE_ASPECT, v) {
                    Some(crate::scene::Part::Legs) => LEG_WARMTH,
                    Some(_) => 1.0,
                    None => 0.0,
                };
            }
        }
        acc * inv
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDetectorConfig {
    template: GrayImage,
    pub logistic_a: f64,
    pub logistic_b: f64,
}

impl Default for ToyDetectorConfig {
    fn default() -> Self {
        let template = decode_pgm(TEMPLATE_ASSET).expect("bundled template decodes");
        Self::new(template, 6.0, -2.2).expect("bundled template is 32x64")
    }
}

impl ToyDetectorConfig {
    pub fn new(template: GrayImage, logistic_a: f64, logistic_b: f64) -> Result<Self, OracleError> {
        if template.width() != TEMPLATE_W || template.height() != TEMPLATE_H {
            return Err(OracleError::Malformed(format!(
                "template must be {TEMPLATE_W}x{TEMPLATE_H}, got {}x{}",
                template.width(),
                template.height()
            )));
        }
        Ok(Self {
            template,
            logistic_a,
            logistic_b,
        })
    }

    pub fn template(&self) -> &GrayImage {
        &self.template
    }
}

pub fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Zero-mean normalized cross-correlation, `0` if either side is flat.
pub fn ncc(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    // below this, 8-bit quantization noise dominates
    const FLAT: f64 = 1e-12;
    if saa <= FLAT * n || sbb <= FLAT * n {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

pub fn toy_score(cfg: &ToyDetectorConfig, image: &(impl PixelSource + ?Sized), bbox: &BBox) -> Result<f64, OracleError> {
    let crop = crop_resize_source(image, bbox, TEMPLATE_W, TEMPLATE_H)?;
    let rho = ncc(&crop, cfg.template.pixels());
    Ok(logistic(cfg.logistic_a * rho + cfg.logistic_b))
}

/// Pure in-process oracle; safe to call from any number of threads.
#[derive(Debug, Clone, Default)]
pub struct ToyOracle {
    pub cfg: ToyDetectorConfig,
}

impl ToyOracle {
    pub fn new(cfg: ToyDetectorConfig) -> Self {
        Self { cfg }
    }
}

impl Oracle for ToyOracle {
    fn score(&self, image: &GrayImage, boxes: &[BBox]) -> Result<Vec<f64>, OracleError> {
        boxes.iter().map(|b| toy_score(&self.cfg, image, b)).collect()
    }

    fn score_source(&self, source: &dyn PixelSource, boxes: &[BBox]) -> Result<Vec<f64>, OracleError> {
        boxes.iter().map(|b| toy_score(&self.cfg, source, b)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{encode_pgm, ImageError};

    #[test]
    #[ignore = "rewrites the bundled asset"]
    fn regenerate_template_asset() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/toy_template_v1.pgm");
        std::fs::write(path, encode_pgm(&procedural_template())).unwrap();
    }

    #[test]
    fn asset_matches_generator() {
        let fresh = encode_pgm(&procedural_template());
        assert_eq!(fresh, TEMPLATE_ASSET, "template asset is stale");
    }

    fn template_image(cfg: &ToyDetectorConfig, f: impl Fn(f64) -> f64) -> GrayImage {
        let t = cfg.template();
        GrayImage::from_fn(TEMPLATE_W, TEMPLATE_H, |x, y| f(t.get(x, y)))
    }

    fn full(img: &GrayImage) -> BBox {
        BBox::new(0.0, 0.0, img.width() as f64, img.height() as f64)
    }

    #[test]
    fn identical_crop_scores_logistic_a_plus_b() {
        let cfg = ToyDetectorConfig::default();
        let img = template_image(&cfg, |v| v);
        let s = toy_score(&cfg, &img, &full(&img)).unwrap();
        assert!((s - logistic(3.8)).abs() < 1e-12);
        assert!((s - 0.978).abs() < 5e-4);
    }

    #[test]
    fn uniform_crop_scores_logistic_b() {
        let cfg = ToyDetectorConfig::default();
        let img = GrayImage::filled(50, 90, 0.6);
        let s = toy_score(&cfg, &img, &BBox::new(3.0, 4.0, 20.0, 70.0)).unwrap();
        assert_eq!(s, logistic(-2.2));
        assert!((s - 0.0998).abs() < 1e-4);
    }

    #[test]
    fn inverted_crop_scores_logistic_b_minus_a() {
        let cfg = ToyDetectorConfig::default();
        let img = template_image(&cfg, |v| 1.0 - v);
        let s = toy_score(&cfg, &img, &full(&img)).unwrap();
        assert!((s - logistic(-8.2)).abs() < 1e-12);
        assert!((s - 2.7e-4).abs() < 1e-5);
    }

    #[test]
    fn oracle_contract() {
        let o = ToyOracle::default();
        let img = GrayImage::from_fn(80, 120, |x, y| ((x * 31 + y * 17) % 23) as f64 / 22.0);
        assert!(o.score(&img, &[]).unwrap().is_empty());
        let b = BBox::new(5.0, 7.0, 30.0, 100.0);
        let s = o.score(&img, &[b, b]).unwrap();
        assert_eq!(s[0].to_bits(), s[1].to_bits());
        assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(matches!(
            o.score(&img, &[BBox::new(60.0, 0.0, 30.0, 100.0)]),
            Err(OracleError::Image(ImageError::BoxOutside { .. }))
        ));
    }

    #[test]
    fn lazy_and_materialized_sources_agree() {
        let o = ToyOracle::default();
        let img = GrayImage::from_fn(80, 120, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0);
        let boxes = [BBox::new(1.5, 2.25, 30.0, 99.0), BBox::new(40.0, 10.0, 20.0, 64.0)];
        let a = o.score(&img, &boxes).unwrap();
        let b = o.score_source(&img, &boxes).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn template_shape_is_enforced() {
        assert!(ToyDetectorConfig::new(GrayImage::filled(32, 63, 0.0), 6.0, -2.2).is_err());
    }

    #[test]
    fn template_has_warm_core_and_cool_limbs() {
        let t = procedural_template();
        assert_eq!(t.get(16, 25), 1.0); // torso
        assert_eq!(t.get(16, 4), 1.0); // head
        assert_eq!(t.get(0, 2), 0.0); // background beside the head
        assert!(t.get(10, 55) == LEG_WARMTH); // left leg
    }
}
