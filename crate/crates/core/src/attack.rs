//! The attacked frame for one target: patch composed at the chest anchor,
//! then one environmental transform applied to the whole frame.
//!
//! Frames are evaluated lazily through [`PixelSource`], so an oracle that
//! only reads the target box never pays for the rest of the image. The
//! lazy and materialized frames are bit-identical.

use std::collections::BTreeMap;

use rand::Rng;

use crate::imaging::{materialize, BBox, GrayImage, PixelSource};
use crate::patchgen::{patch_side, rasterize_patch, PatchError, PatchRaster, PatchTheta, Placement};
use crate::transforms::{apply_map, eot_pixel, sample_transform, warp_map, EotConfig, TransformError, TransformSample};

#[derive(Debug, thiserror::Error)]
pub enum AttackError {
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

/// Rasters of one patch at every side length a dataset needs.
#[derive(Debug, Clone)]
pub struct RasterCache {
    by_side: BTreeMap<usize, PatchRaster>,
}

impl RasterCache {
    pub fn build<'a>(theta: &PatchTheta, targets: impl IntoIterator<Item = &'a BBox>) -> Result<Self, PatchError> {
        let mut by_side = BTreeMap::new();
        for t in targets {
            let side = patch_side(theta.width_frac, t.h);
            if let std::collections::btree_map::Entry::Vacant(e) = by_side.entry(side) {
                e.insert(rasterize_patch(theta, side)?);
            }
        }
        Ok(Self { by_side })
    }

    pub fn get(&self, side: usize) -> Option<&PatchRaster> {
        self.by_side.get(&side)
    }
}

/// Everything random about one attacked view of one target.
#[derive(Debug, Clone)]
pub struct TargetDraw {
    pub sample: TransformSample,
    pub noise_key: u64,
    /// Where the target lands after the transform.
    pub moved: BBox,
}

impl TargetDraw {
    /// Draws a transform, or takes the identity without touching `rng` when
    /// `eot` is `None`.
    pub fn sample(rng: &mut impl Rng, eot: Option<&EotConfig>, target: &BBox, width: usize, height: usize) -> Result<Self, TransformError> {
        let (sample, noise_key) = match eot {
            Some(cfg) => {
                let s = sample_transform(rng, cfg, target);
                (s, rng.next_u64())
            }
            None => (TransformSample::identity(EotConfig::default().tps_grid), 0),
        };
        let moved = sample.transform_box(target, width, height)?;
        Ok(Self {
            sample,
            noise_key,
            moved,
        })
    }
}

/// The patch layer of one target after non-rigid deformation.
#[derive(Debug, Clone)]
pub struct PatchLayer {
    pub raster: PatchRaster,
    pub place: Placement,
    pub gray: f64,
}

impl PatchLayer {
    pub fn new(theta: &PatchTheta, rasters: &RasterCache, target: &BBox, draw: &TargetDraw, anchor: f64) -> Result<Self, AttackError> {
        let side = patch_side(theta.width_frac, target.h);
        let base = rasters.get(side).ok_or(PatchError::SideMismatch { expected: side, found: 0 })?;
        let raster = match warp_map(side, &draw.sample)? {
            None => base.clone(),
            Some(map) => apply_map(base, &map),
        };
        Ok(Self {
            raster,
            place: Placement::on(target, side, anchor),
            gray: theta.gray.clamp(0.0, 1.0),
        })
    }
}

/// Lazily evaluated frame: `scene`, optionally patched, then transformed.
pub struct FrameView<'a> {
    scene: &'a GrayImage,
    layer: Option<&'a PatchLayer>,
    draw: &'a TargetDraw,
    center: (f64, f64),
}

impl<'a> FrameView<'a> {
    pub fn new(scene: &'a GrayImage, target: &BBox, layer: Option<&'a PatchLayer>, draw: &'a TargetDraw) -> Self {
        Self {
            scene,
            layer,
            draw,
            center: target.center(),
        }
    }

    #[inline]
    fn composed(&self, x: usize, y: usize) -> f64 {
        let base = self.scene.get(x, y);
        match self.layer {
            Some(l) => l.place.blend(&l.raster, l.gray, x, y, base),
            None => base,
        }
    }

    pub fn to_image(&self) -> GrayImage {
        materialize(self)
    }
}

impl PixelSource for FrameView<'_> {
    fn width(&self) -> usize {
        self.scene.width()
    }

    fn height(&self) -> usize {
        self.scene.height()
    }

    #[inline]
    fn pixel(&self, x: usize, y: usize) -> f64 {
        let (w, h) = (self.scene.width(), self.scene.height());
        eot_pixel(w, h, |i, j| self.composed(i, j), self.center, &self.draw.sample, self.draw.noise_key, x, y)
    }
}
