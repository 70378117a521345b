//! The physical transformation distribution: environmental variation of the
//! whole frame (scale, translation, sensor noise) and non-rigid deformation
//! of the patch layer.

mod tps;

pub use tps::{lattice, tps_fit, tps_warp, TpsModel};
pub(crate) use tps::{apply_map, warp_map};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{bilinear, BBox, GrayImage};
use crate::rng::counter_normal;

/// Transformed boxes smaller than this (after clipping) cannot be scored.
pub const MIN_BOX_SIDE: f64 = 8.0;

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("singular spline fit: {0}")]
    Singular(String),
    #[error("invalid transform input: {0}")]
    Invalid(String),
    #[error("transformed box {0:?} is smaller than {MIN_BOX_SIDE}x{MIN_BOX_SIDE} inside the image")]
    Degenerate(BBox),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EotConfig {
    pub scale_range: [f64; 2],
    pub translate_frac: f64,
    pub noise_sigma_max: f64,
    pub tps_grid: usize,
    pub tps_offset_frac: f64,
    pub draws_per_eval: usize,
}

impl Default for EotConfig {
    fn default() -> Self {
        Self {
            scale_range: [0.85, 1.15],
            translate_frac: 0.05,
            noise_sigma_max: 0.02,
            tps_grid: 4,
            tps_offset_frac: 0.02,
            draws_per_eval: 4,
        }
    }
}

impl EotConfig {
    /// Degenerate ranges: every draw is the identity.
    pub fn identity() -> Self {
        Self {
            scale_range: [1.0, 1.0],
            translate_frac: 0.0,
            noise_sigma_max: 0.0,
            tps_offset_frac: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TransformError> {
        let [lo, hi] = self.scale_range;
        let ok = lo > 0.0
            && lo <= hi
            && hi.is_finite()
            && self.translate_frac >= 0.0
            && self.noise_sigma_max >= 0.0
            && self.tps_offset_frac >= 0.0
            && self.tps_grid >= 2
            && self.draws_per_eval >= 1;
        if ok {
            Ok(())
        } else {
            Err(TransformError::Invalid(format!("invalid EOT config {self:?}")))
        }
    }
}

/// One draw from the transformation distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSample {
    pub scale: f64,
    /// Translation in pixels.
    pub dx: f64,
    pub dy: f64,
    pub noise_sigma: f64,
    /// Control-lattice displacements, row-major, as fractions of the patch
    /// side so one draw applies to patches of any pixel size.
    pub tps_offsets: Vec<[f64; 2]>,
}

impl TransformSample {
    pub fn identity(tps_grid: usize) -> Self {
        Self {
            scale: 1.0,
            dx: 0.0,
            dy: 0.0,
            noise_sigma: 0.0,
            tps_offsets: vec![[0.0, 0.0]; tps_grid * tps_grid],
        }
    }

    pub fn is_geometric_identity(&self) -> bool {
        self.scale == 1.0 && self.dx == 0.0 && self.dy == 0.0
    }

    pub fn is_identity(&self) -> bool {
        self.is_geometric_identity()
            && self.noise_sigma == 0.0
            && self.tps_offsets.iter().all(|o| o[0] == 0.0 && o[1] == 0.0)
    }

    /// Box after scaling about its center and translating, clipped to the
    /// image.
    pub fn transform_box(&self, target: &BBox, width: usize, height: usize) -> Result<BBox, TransformError> {
        if self.is_geometric_identity() && target.fits_in(width, height) {
            return Ok(*target);
        }
        let (cx, cy) = target.center();
        let (w, h) = (target.w * self.scale, target.h * self.scale);
        let (nx, ny) = (cx + self.dx - 0.5 * w, cy + self.dy - 0.5 * h);
        let x0 = nx.max(0.0);
        let y0 = ny.max(0.0);
        let x1 = (nx + w).min(width as f64);
        let y1 = (ny + h).min(height as f64);
        let out = BBox::new(x0, y0, x1 - x0, y1 - y0);
        if out.w < MIN_BOX_SIDE || out.h < MIN_BOX_SIDE {
            return Err(TransformError::Degenerate(out));
        }
        Ok(out)
    }
}

#[inline]
fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Draws one transformation for `target`. Always consumes the same amount
/// of randomness regardless of the configured ranges.
pub fn sample_transform(rng: &mut impl Rng, cfg: &EotConfig, target: &BBox) -> TransformSample {
    let [lo, hi] = cfg.scale_range;
    let t = cfg.translate_frac;
    let f = cfg.tps_offset_frac;
    let scale = uniform(rng, lo, hi);
    let dx = uniform(rng, -t, t) * target.w;
    let dy = uniform(rng, -t, t) * target.h;
    let noise_sigma = uniform(rng, 0.0, cfg.noise_sigma_max);
    let tps_offsets = (0..cfg.tps_grid * cfg.tps_grid)
        .map(|_| [uniform(rng, -f, f), uniform(rng, -f, f)])
        .collect();
    TransformSample {
        scale,
        dx,
        dy,
        noise_sigma,
        tps_offsets,
    }
}

/// Pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

/// One pixel of the transformed frame, read from a source addressed
/// through `fetch`. Depends only on the absolute position, so any
/// sub-rectangle matches the corresponding part of the full frame.
#[inline]
#[allow(clippy::too_many_arguments)]
pub(crate) fn eot_pixel(
    width: usize,
    height: usize,
    fetch: impl Fn(usize, usize) -> f64,
    center: (f64, f64),
    sample: &TransformSample,
    noise_key: u64,
    x: usize,
    y: usize,
) -> f64 {
    let v = if sample.is_geometric_identity() {
        fetch(x, y)
    } else {
        let inv = 1.0 / sample.scale;
        let sx = center.0 + (x as f64 + 0.5 - center.0 - sample.dx) * inv;
        let sy = center.1 + (y as f64 + 0.5 - center.1 - sample.dy) * inv;
        bilinear(sx, sy, width, height, fetch)
    };
    if sample.noise_sigma > 0.0 {
        (v + sample.noise_sigma * counter_normal(noise_key, (y * width + x) as u64)).clamp(0.0, 1.0)
    } else {
        v
    }
}

pub(crate) fn render_eot(
    width: usize,
    height: usize,
    fetch: impl Fn(usize, usize) -> f64,
    center: (f64, f64),
    sample: &TransformSample,
    noise_key: u64,
    rect: Rect,
) -> Vec<f64> {
    let mut out = Vec::with_capacity((rect.x1 - rect.x0) * (rect.y1 - rect.y0));
    for y in rect.y0..rect.y1 {
        for x in rect.x0..rect.x1 {
            out.push(eot_pixel(width, height, &fetch, center, sample, noise_key, x, y));
        }
    }
    out
}

/// Scales the frame about the target center, translates it, adds Gaussian
/// sensor noise, and returns the image with the correspondingly moved box.
pub fn apply_eot(
    scene: &GrayImage,
    target: &BBox,
    sample: &TransformSample,
    rng: &mut impl RngCore,
) -> Result<(GrayImage, BBox), TransformError> {
    let noise_key = rng.next_u64();
    let (w, h) = (scene.width(), scene.height());
    let moved = sample.transform_box(target, w, h)?;
    if sample.is_geometric_identity() && sample.noise_sigma == 0.0 {
        return Ok((scene.clone(), moved));
    }
    let rect = Rect { x0: 0, y0: 0, x1: w, y1: h };
    let pixels = render_eot(w, h, |x, y| scene.get(x, y), target.center(), sample, noise_key, rect);
    let image = GrayImage::from_pixels(w, h, pixels).expect("same shape");
    Ok((image, moved))
}
