//! Curved-block patch: parameterization, validation, rendering and
//! compositing onto a scene.

mod geometry;
mod raster;
mod theta;

pub use geometry::{bezier_point, cell_outline, edge_geometry, flatten_edge, patch_outline, signed_area, Point};
pub use raster::{
    claim_subsamples, rasterize_patch, subsamples_inside_outline, PatchRaster, SubsampleClaims, SEGMENTS_PER_EDGE,
    SUPERSAMPLE,
};
pub use theta::{
    edge_count, project_delta, validate_theta, BoundaryKind, EdgeId, Orientation, PatchTheta, Violation, TAU,
};

use thiserror::Error;

use crate::imaging::{BBox, GrayImage};

/// Default vertical placement of the patch center, as a fraction of the
/// target box height from its top edge.
pub const DEFAULT_ANCHOR: f64 = 0.40;

#[derive(Debug, Error)]
pub enum PatchError {
    #[error("curve parameter {0} outside [0, 1]")]
    ParamOutOfRange(f64),
    #[error("edge {0} is not part of the grid")]
    InvalidEdge(EdgeId),
    #[error("cell ({row}, {col}) is not part of the grid")]
    InvalidCell { row: usize, col: usize },
    #[error("raster side {side} is smaller than the grid dimension {dim}")]
    SideTooSmall { side: usize, dim: usize },
    #[error("malformed patch: {0}")]
    Malformed(String),
    #[error("degenerate target box {0:?}")]
    DegenerateBox(BBox),
    #[error("raster side {found} does not match the expected {expected}")]
    SideMismatch { expected: usize, found: usize },
}

/// Pixel side of the patch for a target of height `box_h`.
pub fn patch_side(width_frac: f64, box_h: f64) -> usize {
    (width_frac * box_h).round().max(1.0) as usize
}

/// Integer placement of a `side x side` patch square on a target box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub left: i64,
    pub top: i64,
    pub side: usize,
}

impl Placement {
    pub fn on(target: &BBox, side: usize, anchor: f64) -> Self {
        let (cx, _) = target.center();
        let cy = target.y + anchor * target.h;
        let half = side as f64 / 2.0;
        Self {
            left: (cx - half).round() as i64,
            top: (cy - half).round() as i64,
            side,
        }
    }

    /// Coverage-weighted intensity at image pixel `(x, y)` over `base`.
    #[inline]
    pub fn blend(&self, raster: &PatchRaster, gray: f64, x: usize, y: usize, base: f64) -> f64 {
        let px = x as i64 - self.left;
        let py = y as i64 - self.top;
        if px < 0 || py < 0 || px >= self.side as i64 || py >= self.side as i64 {
            return base;
        }
        let c = raster.get(px as usize, py as usize);
        if c == 0.0 {
            base
        } else {
            (1.0 - c) * base + c * gray
        }
    }
}

/// Linear fusion of the patch layer into `scene` at the chest anchor of
/// `target`: `(1 - c) * scene + c * gray` inside the square, untouched
/// outside it.
pub fn compose(scene: &GrayImage, target: &BBox, theta: &PatchTheta, raster: &PatchRaster) -> Result<GrayImage, PatchError> {
    compose_at(scene, target, theta, raster, DEFAULT_ANCHOR)
}

pub fn compose_at(
    scene: &GrayImage,
    target: &BBox,
    theta: &PatchTheta,
    raster: &PatchRaster,
    anchor: f64,
) -> Result<GrayImage, PatchError> {
    if !target.is_valid() {
        return Err(PatchError::DegenerateBox(*target));
    }
    let expected = patch_side(theta.width_frac, target.h);
    if raster.side() != expected {
        return Err(PatchError::SideMismatch {
            expected,
            found: raster.side(),
        });
    }
    let place = Placement::on(target, raster.side(), anchor);
    let (w, h) = (scene.width() as i64, scene.height() as i64);
    let mut pixels = scene.pixels().to_vec();
    let gray = theta.gray.clamp(0.0, 1.0);
    let x0 = place.left.max(0);
    let x1 = (place.left + place.side as i64).min(w);
    let y0 = place.top.max(0);
    let y1 = (place.top + place.side as i64).min(h);
    for y in y0..y1 {
        for x in x0..x1 {
            let i = (y * w + x) as usize;
            pixels[i] = place.blend(raster, gray, x as usize, y as usize, pixels[i]);
        }
    }
    Ok(GrayImage::from_pixels(scene.width(), scene.height(), pixels).expect("same shape"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn target() -> BBox {
        BBox::new(20.0, 10.0, 30.0, 80.0)
    }

    #[test]
    fn full_black_coverage_replaces_pixel() {
        let scene = GrayImage::filled(100, 100, 0.8);
        let t = PatchTheta::regular(6, 0.25, 0.0, BoundaryKind::Bezier);
        let r = rasterize_patch(&t, 20).unwrap();
        let out = compose(&scene, &target(), &t, &r).unwrap();
        // center (35, 42), side 20 -> square [25, 45) x [32, 52)
        assert_eq!(out.get(30, 40), 0.0);
        assert_eq!(out.get(25, 32), 0.0);
        assert_eq!(out.get(24, 40), 0.8);
        assert_eq!(out.get(45, 40), 0.8);
        assert_eq!(out.get(30, 52), 0.8);
    }

    #[test]
    fn empty_raster_is_a_no_op() {
        let scene = GrayImage::from_fn(100, 100, |x, y| ((x * 7 + y * 13) % 17) as f64 / 16.0);
        let t = PatchTheta::regular(6, 0.25, 0.0, BoundaryKind::Bezier);
        let out = compose(&scene, &target(), &t, &PatchRaster::empty(20)).unwrap();
        assert_eq!(out, scene);
    }

    #[test]
    fn half_coverage_fuses_linearly() {
        let scene = GrayImage::filled(100, 100, 0.8);
        let t = PatchTheta::regular(6, 0.25, 0.0, BoundaryKind::Bezier);
        let r = PatchRaster::new(20, vec![0.5; 400]).unwrap();
        let out = compose(&scene, &target(), &t, &r).unwrap();
        assert!((out.get(35, 42) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn nothing_changes_outside_the_square() {
        let scene = GrayImage::from_fn(64, 64, |x, y| ((x + 3 * y) % 10) as f64 / 9.0);
        let mut t = PatchTheta::regular(6, 0.5, 0.3, BoundaryKind::Bezier);
        t.deltas.iter_mut().enumerate().for_each(|(i, d)| *d = if i % 3 == 0 { 0.45 } else { -0.2 });
        let bbox = BBox::new(2.0, 2.0, 20.0, 60.0);
        let r = rasterize_patch(&t, 30).unwrap();
        let out = compose(&scene, &bbox, &t, &r).unwrap();
        let p = Placement::on(&bbox, 30, DEFAULT_ANCHOR);
        for y in 0..64i64 {
            for x in 0..64i64 {
                let inside = x >= p.left && x < p.left + 30 && y >= p.top && y < p.top + 30;
                if !inside {
                    assert_eq!(out.get(x as usize, y as usize), scene.get(x as usize, y as usize));
                }
            }
        }
    }

    #[test]
    fn compose_checks_inputs() {
        let scene = GrayImage::filled(100, 100, 0.5);
        let t = PatchTheta::regular(6, 0.25, 0.0, BoundaryKind::Bezier);
        let r = PatchRaster::empty(20);
        assert!(matches!(
            compose(&scene, &BBox::new(0.0, 0.0, 0.0, 10.0), &t, &r),
            Err(PatchError::DegenerateBox(_))
        ));
        assert!(matches!(
            compose(&scene, &BBox::new(0.0, 0.0, 10.0, 40.0), &t, &r),
            Err(PatchError::SideMismatch { expected: 10, found: 20 })
        ));
    }
}
