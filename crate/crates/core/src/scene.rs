//! Synthetic infrared pedestrian scenes and the on-disk dataset format.
//!
//! A dataset directory holds `images/*.pgm` and `annotations.json`:
//!
//! ```json
//! {"samples": [{"id": "scene_0000", "image": "images/scene_0000.pgm", "boxes": [[x, y, w, h]]}]}
//! ```
//!
//! Scene noise comes from ChaCha8 streams keyed by `(seed, index)` feeding a
//! counter-based Box-Muller generator, and silhouettes are rasterized with
//! integer arithmetic, so datasets are byte-identical across platforms.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{self, BBox, GrayImage, ImageError};
use crate::rng::{self, counter_normal};

/// Boxes shorter than this are dropped on load.
pub const MIN_BOX_HEIGHT: f64 = 120.0;

/// Width over height of the pedestrian silhouette's bounding box.
pub const SILHOUETTE_ASPECT: f64 = 0.27;

pub const MANIFEST: &str = "annotations.json";

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid scene config: {0}")]
    Config(String),
    #[error("pedestrian of height {height} cannot fit a {width}x{image_h} image")]
    NoFit { height: usize, width: usize, image_h: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path} is malformed: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("sample {id}: image {path} is missing")]
    MissingImage { id: String, path: PathBuf },
    #[error("sample {id}: {source}")]
    Image {
        id: String,
        #[source]
        source: ImageError,
    },
    #[error("sample {id}: box {bbox:?} lies outside its {width}x{height} image")]
    BoxOutside {
        id: String,
        bbox: BBox,
        width: usize,
        height: usize,
    },
}

/// An infrared frame with its ground-truth pedestrian boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    pub id: String,
    pub image: GrayImage,
    pub boxes: Vec<BBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub image_w: usize,
    pub image_h: usize,
    pub bg_level: f64,
    pub bg_noise: f64,
    pub body_level: f64,
    pub body_gradient: f64,
    pub height_range: [usize; 2],
    pub count: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            image_w: 640,
            image_h: 512,
            bg_level: 0.25,
            bg_noise: 0.02,
            body_level: 0.8,
            body_gradient: 0.15,
            height_range: [140, 360],
            count: 30,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        let [lo, hi] = self.height_range;
        let problem = if !(0.0 <= self.bg_level && self.bg_level < self.body_level && self.body_level <= 1.0) {
            Some("need 0 <= bg_level < body_level <= 1")
        } else if (lo as f64) < MIN_BOX_HEIGHT || lo > hi {
            Some("height_range must satisfy 120 <= lo <= hi")
        } else if self.bg_noise < 0.0 || self.body_gradient < 0.0 {
            Some("noise and gradient must be non-negative")
        } else {
            None
        };
        match problem {
            Some(p) => Err(SceneError::Config(p.into())),
            None => Ok(()),
        }
    }
}

/// Part intensities of a silhouette.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Part {
    Head,
    Torso,
    Legs,
}

/// Silhouette proportions in units of the pedestrian height, measured
/// from the top of the box (head) and from its vertical center line.
mod shape {
    pub const HEAD_R: f64 = 0.065;
    pub const TORSO_TOP: f64 = 0.12;
    pub const TORSO_BOTTOM: f64 = 0.55;
    pub const TORSO_CORNER: f64 = 0.04;
    pub const LEG_TOP: f64 = 0.53;
    pub const LEG_INNER: f64 = 0.02;
    pub const LEG_OUTER: f64 = 0.10;
}

/// Continuous membership test at `(x, y)`, both in height units with `x`
/// measured from the center line.
pub(crate) fn silhouette_part(x: f64, y: f64) -> Option<Part> {
    use shape::*;
    let half_w = 0.5 * SILHOUETTE_ASPECT;
    if x * x + (y - HEAD_R).powi(2) <= HEAD_R * HEAD_R {
        return Some(Part::Head);
    }
    if (TORSO_TOP..=TORSO_BOTTOM).contains(&y) && x.abs() <= half_w {
        // rounded corners
        let cx = x.abs() - (half_w - TORSO_CORNER);
        let cy = if y < TORSO_TOP + TORSO_CORNER {
            TORSO_TOP + TORSO_CORNER - y
        } else if y > TORSO_BOTTOM - TORSO_CORNER {
            y - (TORSO_BOTTOM - TORSO_CORNER)
        } else {
            0.0
        };
        if cx <= 0.0 || cy <= 0.0 || cx * cx + cy * cy <= TORSO_CORNER * TORSO_CORNER {
            return Some(Part::Torso);
        }
    }
    if (LEG_TOP..=1.0).contains(&y) && (LEG_INNER..=LEG_OUTER).contains(&x.abs()) {
        return Some(Part::Legs);
    }
    None
}

/// Integer-lattice silhouette of a pedestrian `height` pixels tall,
/// evaluated at pixel centers. Returns a row-major mask of the tight box.
pub(crate) fn silhouette_mask(height: usize) -> (usize, Vec<bool>) {
    use shape::*;
    let h = height as i64;
    let px = |f: f64| (f * height as f64).round() as i64;
    let w = px(SILHOUETTE_ASPECT).max(1);
    let (head_r, torso_top, torso_bottom, corner) = (px(HEAD_R), px(TORSO_TOP), px(TORSO_BOTTOM), px(TORSO_CORNER));
    let (leg_top, leg_inner, leg_outer) = (px(LEG_TOP), px(LEG_INNER), px(LEG_OUTER));
    let mut mask = Vec::with_capacity((w * h) as usize);
    for j in 0..h {
        // doubled coordinates of the pixel center
        let y2 = 2 * j + 1;
        for i in 0..w {
            let x2 = 2 * i + 1 - w;
            let ax2 = x2.abs();
            let head = x2 * x2 + (y2 - 2 * head_r).pow(2) <= 4 * head_r * head_r;
            let torso = y2 >= 2 * torso_top && y2 <= 2 * torso_bottom && {
                let cx = ax2 - (w - 2 * corner);
                let cy = if y2 < 2 * (torso_top + corner) {
                    2 * (torso_top + corner) - y2
                } else if y2 > 2 * (torso_bottom - corner) {
                    y2 - 2 * (torso_bottom - corner)
                } else {
                    0
                };
                cx <= 0 || cy <= 0 || cx * cx + cy * cy <= 4 * corner * corner
            };
            let legs = y2 >= 2 * leg_top && ax2 >= 2 * leg_inner && ax2 <= 2 * leg_outer;
            mask.push(head || torso || legs);
        }
    }
    (w as usize, mask)
}

/// Renders one scene: noisy flat background and a single pedestrian whose
/// box tightly encloses the silhouette.
pub fn generate_scene(rng: &mut impl Rng, cfg: &SceneConfig, id: impl Into<String>) -> Result<SceneSample, SceneError> {
    cfg.validate()?;
    let [lo, hi] = cfg.height_range;
    let widest = silhouette_mask(hi).0;
    if hi > cfg.image_h || widest > cfg.image_w {
        return Err(SceneError::NoFit {
            height: hi,
            width: cfg.image_w,
            image_h: cfg.image_h,
        });
    }
    let height = rng.random_range(lo..=hi);
    let (bw, mask) = silhouette_mask(height);
    let x0 = rng.random_range(0..=cfg.image_w - bw);
    let y0 = rng.random_range(0..=cfg.image_h - height);
    let noise_key: u64 = rng.random();
    let (w, h) = (cfg.image_w, cfg.image_h);
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let inside = x >= x0 && x < x0 + bw && y >= y0 && y < y0 + height && mask[(y - y0) * bw + (x - x0)];
            let v = if inside {
                let v = (y - y0) as f64 + 0.5;
                cfg.body_level - cfg.body_gradient * v / height as f64
            } else if cfg.bg_noise > 0.0 {
                cfg.bg_level + cfg.bg_noise * counter_normal(noise_key, (y * w + x) as u64)
            } else {
                cfg.bg_level
            };
            pixels.push(v);
        }
    }
    let image = GrayImage::from_pixels(w, h, pixels).expect("dimensions are consistent");
    let bbox = BBox::new(x0 as f64, y0 as f64, bw as f64, height as f64);
    Ok(SceneSample {
        id: id.into(),
        image,
        boxes: vec![bbox],
    })
}

/// Box with the pedestrian aspect ratio that overlaps no ground truth.
pub fn random_background_box(rng: &mut impl Rng, sample: &SceneSample, height_range: [usize; 2]) -> Option<BBox> {
    let (w, h) = (sample.image.width(), sample.image.height());
    for _ in 0..1000 {
        let bh = rng.random_range(height_range[0]..=height_range[1]).min(h);
        let bw = ((bh as f64 * SILHOUETTE_ASPECT).round() as usize).clamp(1, w);
        let x = rng.random_range(0..=w - bw);
        let y = rng.random_range(0..=h - bh);
        let b = BBox::new(x as f64, y as f64, bw as f64, bh as f64);
        if sample.boxes.iter().all(|g| !g.intersects(&b)) {
            return Some(b);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub image: String,
    pub boxes: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub samples: Vec<ManifestEntry>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> SceneError + '_ {
    move |source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Scene `index` of the dataset drawn from `seed`.
pub fn dataset_scene(seed: u64, index: usize, cfg: &SceneConfig) -> Result<SceneSample, SceneError> {
    let mut rng = rng::stream(seed, &[rng::tag::SCENE, index as u64]);
    let mut s = generate_scene(&mut rng, cfg, format!("scene_{index:04}"))?;
    // what a reader of the written files will see
    s.image = GrayImage::from_bytes(s.image.width(), s.image.height(), &s.image.to_bytes()).expect("same shape");
    Ok(s)
}

/// Writes `cfg.count` scenes and the manifest under `dir`.
pub fn generate_dataset(seed: u64, cfg: &SceneConfig, dir: impl AsRef<Path>) -> Result<Vec<SceneSample>, SceneError> {
    let dir = dir.as_ref();
    cfg.validate()?;
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(io(&images))?;
    let mut samples = Vec::with_capacity(cfg.count);
    let mut manifest = Manifest::default();
    for index in 0..cfg.count {
        let sample = dataset_scene(seed, index, cfg)?;
        let rel = format!("images/{}.pgm", sample.id);
        let path = dir.join(&rel);
        imaging::save_pgm(&sample.image, &path).map_err(|source| SceneError::Image {
            id: sample.id.clone(),
            source,
        })?;
        manifest.samples.push(ManifestEntry {
            id: sample.id.clone(),
            image: rel,
            boxes: sample.boxes.iter().map(BBox::to_array).collect(),
        });
        samples.push(sample);
    }
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = dir.join(MANIFEST);
    fs::write(&path, text + "\n").map_err(io(&path))?;
    Ok(samples)
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub samples: Vec<SceneSample>,
    /// Boxes dropped for being shorter than [`MIN_BOX_HEIGHT`].
    pub skipped_boxes: usize,
    /// Entries left with no usable box.
    pub dropped_samples: usize,
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<LoadedDataset, SceneError> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| SceneError::Manifest {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    let mut out = LoadedDataset {
        samples: Vec::with_capacity(manifest.samples.len()),
        skipped_boxes: 0,
        dropped_samples: 0,
    };
    for entry in manifest.samples {
        let image_path = dir.join(&entry.image);
        let image = match imaging::load_pgm(&image_path) {
            Ok(img) => img,
            Err(ImageError::Missing(_)) => {
                return Err(SceneError::MissingImage {
                    id: entry.id,
                    path: image_path,
                })
            }
            Err(source) => return Err(SceneError::Image { id: entry.id, source }),
        };
        let mut boxes = Vec::with_capacity(entry.boxes.len());
        for raw in entry.boxes {
            let bbox = BBox::from_array(raw);
            if !image.contains(&bbox) {
                return Err(SceneError::BoxOutside {
                    id: entry.id,
                    bbox,
                    width: image.width(),
                    height: image.height(),
                });
            }
            if bbox.h < MIN_BOX_HEIGHT {
                out.skipped_boxes += 1;
            } else {
                boxes.push(bbox);
            }
        }
        if boxes.is_empty() {
            out.dropped_samples += 1;
            continue;
        }
        out.samples.push(SceneSample {
            id: entry.id,
            image,
            boxes,
        });
    }
    Ok(out)
}
