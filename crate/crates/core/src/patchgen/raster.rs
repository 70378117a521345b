//! Even-odd scanline fill of cell outlines at 2x2 supersampling.
//!
//! Polygons are scaled to subsample units (an exact power-of-two scale) and
//! every segment is put in a canonical `(y, x)` order before intersecting
//! it with a scanline, so two cells sharing an edge compute bit-identical
//! crossings. Spans are half-open, which assigns each subsample on a shared
//! boundary to exactly one side.

use super::geometry::{EdgeTable, Point};
use super::theta::PatchTheta;
use super::PatchError;

/// Subsamples per pixel along each axis.
pub const SUPERSAMPLE: usize = 2;

/// Flattening resolution for every edge curve.
pub const SEGMENTS_PER_EDGE: usize = 16;

/// Per-pixel occupancy of the rendered patch, `side x side`, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchRaster {
    side: usize,
    coverage: Vec<f64>,
}

impl PatchRaster {
    pub fn new(side: usize, coverage: Vec<f64>) -> Result<Self, PatchError> {
        if side == 0 || coverage.len() != side * side {
            return Err(PatchError::Malformed(format!(
                "{} coverage values for side {side}",
                coverage.len()
            )));
        }
        if coverage.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(PatchError::Malformed("coverage outside [0, 1]".into()));
        }
        Ok(Self { side, coverage })
    }

    pub fn empty(side: usize) -> Self {
        Self {
            side,
            coverage: vec![0.0; side * side],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn coverage(&self) -> &[f64] {
        &self.coverage
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.coverage[y * self.side + x]
    }

    /// Covered area over the area of the patch square.
    pub fn coverage_fraction(&self) -> f64 {
        self.coverage.iter().sum::<f64>() / (self.side * self.side) as f64
    }

    pub fn is_empty(&self) -> bool {
        self.coverage.iter().all(|&c| c == 0.0)
    }
}

/// Which cell owns each subsample, filled in row-major cell order.
#[derive(Debug, Clone)]
pub struct SubsampleClaims {
    /// Subsample grid side, `SUPERSAMPLE * side`.
    pub grid: usize,
    /// `0` when unclaimed, otherwise `1 + row * dim + col` of the first claimant.
    pub owner: Vec<u16>,
    /// Subsamples that a later cell also found inside its outline.
    pub conflicts: usize,
}

impl SubsampleClaims {
    pub fn claimed(&self) -> usize {
        self.owner.iter().filter(|&&o| o != 0).count()
    }
}

struct Segment {
    a: Point,
    b: Point,
}

fn canonical_segments(poly: &[Point], scale: f64) -> Vec<Segment> {
    let n = poly.len();
    (0..n)
        .filter_map(|i| {
            let p = Point::new(poly[i].x * scale, poly[i].y * scale);
            let q = Point::new(poly[(i + 1) % n].x * scale, poly[(i + 1) % n].y * scale);
            if p.y == q.y {
                return None;
            }
            let (a, b) = if (p.y, p.x) < (q.y, q.x) { (p, q) } else { (q, p) };
            Some(Segment { a, b })
        })
        .collect()
}

/// Calls `span(row, start, end)` for every half-open run of subsample
/// centers inside `poly` (even-odd rule) on a `grid x grid` lattice.
fn scan_polygon(poly: &[Point], scale: f64, grid: usize, mut span: impl FnMut(usize, usize, usize)) {
    let segs = canonical_segments(poly, scale);
    if segs.is_empty() {
        return;
    }
    let min_y = segs.iter().map(|s| s.a.y).fold(f64::INFINITY, f64::min);
    let max_y = segs.iter().map(|s| s.b.y).fold(f64::NEG_INFINITY, f64::max);
    let row_lo = (min_y - 0.5).ceil().max(0.0) as usize;
    let row_hi = ((max_y - 0.5).ceil().max(0.0) as usize).min(grid);
    let mut xs = Vec::with_capacity(16);
    for row in row_lo..row_hi {
        let yc = row as f64 + 0.5;
        xs.clear();
        for s in &segs {
            if s.a.y <= yc && yc < s.b.y {
                xs.push(s.a.x + (yc - s.a.y) * (s.b.x - s.a.x) / (s.b.y - s.a.y));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let start = (pair[0] - 0.5).ceil().clamp(0.0, grid as f64) as usize;
            let end = (pair[1] - 0.5).ceil().clamp(0.0, grid as f64) as usize;
            if start < end {
                span(row, start, end);
            }
        }
    }
}

fn check_raster_inputs(theta: &PatchTheta, side: usize) -> Result<(), PatchError> {
    let dim = theta.dim;
    if dim == 0
        || theta.deltas.len() != super::theta::edge_count(dim)
        || theta.mask.len() != dim
        || theta.mask.iter().any(|r| r.len() != dim)
    {
        return Err(PatchError::Malformed(format!("inconsistent theta shape for dim {dim}")));
    }
    if side < dim {
        return Err(PatchError::SideTooSmall { side, dim });
    }
    if dim * dim >= u16::MAX as usize {
        return Err(PatchError::Malformed(format!("dim {dim} too large")));
    }
    Ok(())
}

/// Supersampled ownership map. With `visible_only`, masked-out cells are
/// skipped; otherwise every cell of the grid claims its interior.
pub fn claim_subsamples(theta: &PatchTheta, side: usize, visible_only: bool) -> Result<SubsampleClaims, PatchError> {
    check_raster_inputs(theta, side)?;
    let dim = theta.dim;
    let spacing = side as f64 / dim as f64;
    let table = EdgeTable::build(theta, spacing, SEGMENTS_PER_EDGE);
    let grid = side * SUPERSAMPLE;
    let mut owner = vec![0u16; grid * grid];
    let mut conflicts = 0;
    for row in 0..dim {
        for col in 0..dim {
            if visible_only && !theta.is_visible(row, col) {
                continue;
            }
            let id = (1 + row * dim + col) as u16;
            let outline = table.cell_outline(row, col);
            scan_polygon(&outline, SUPERSAMPLE as f64, grid, |r, a, b| {
                for o in &mut owner[r * grid + a..r * grid + b] {
                    if *o == 0 {
                        *o = id;
                    } else {
                        conflicts += 1;
                    }
                }
            });
        }
    }
    Ok(SubsampleClaims { grid, owner, conflicts })
}

/// Number of subsamples inside the outer boundary of the whole grid.
pub fn subsamples_inside_outline(theta: &PatchTheta, side: usize) -> Result<usize, PatchError> {
    check_raster_inputs(theta, side)?;
    let spacing = side as f64 / theta.dim as f64;
    let table = EdgeTable::build(theta, spacing, SEGMENTS_PER_EDGE);
    let grid = side * SUPERSAMPLE;
    let mut count = 0;
    scan_polygon(&table.patch_outline(), SUPERSAMPLE as f64, grid, |_, a, b| count += b - a);
    Ok(count)
}

/// Renders the visible cells into a `side x side` coverage raster.
pub fn rasterize_patch(theta: &PatchTheta, side: usize) -> Result<PatchRaster, PatchError> {
    let claims = claim_subsamples(theta, side, true)?;
    let grid = claims.grid;
    let per_pixel = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    let mut coverage = vec![0.0; side * side];
    for (y, row) in coverage.chunks_exact_mut(side).enumerate() {
        for (x, c) in row.iter_mut().enumerate() {
            let mut hits = 0u32;
            for sy in 0..SUPERSAMPLE {
                let base = (y * SUPERSAMPLE + sy) * grid + x * SUPERSAMPLE;
                hits += claims.owner[base..base + SUPERSAMPLE].iter().filter(|&&o| o != 0).count() as u32;
            }
            *c = f64::from(hits) / per_pixel;
        }
    }
    Ok(PatchRaster { side, coverage })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patchgen::theta::{BoundaryKind, EdgeId, TAU};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_feasible(rng: &mut impl Rng, dim: usize) -> PatchTheta {
        let mut t = PatchTheta::regular(dim, 0.25, 0.0, BoundaryKind::Bezier);
        for d in &mut t.deltas {
            *d = rng.random_range(-TAU..=TAU);
        }
        t
    }

    #[test]
    fn empty_mask_covers_nothing() {
        let mut t = PatchTheta::regular(6, 0.25, 0.0, BoundaryKind::Bezier);
        t.mask = vec![vec![0; 6]; 6];
        assert!(rasterize_patch(&t, 60).unwrap().is_empty());
    }

    #[test]
    fn full_regular_grid_tiles_exactly() {
        let t = PatchTheta::regular(6, 0.25, 0.0, BoundaryKind::Bezier);
        let r = rasterize_patch(&t, 240).unwrap();
        assert!((r.coverage_fraction() - 1.0).abs() < 1e-6);
        assert!(r.coverage().iter().all(|&c| c == 1.0));
    }

    #[test]
    fn single_cell_area_ratio() {
        for (row, col) in [(0, 0), (2, 3), (5, 5)] {
            let mut t = PatchTheta::regular(6, 0.25, 0.0, BoundaryKind::Bezier);
            t.mask = vec![vec![0; 6]; 6];
            t.mask[row][col] = 1;
            for side in [60, 97, 256] {
                let f = rasterize_patch(&t, side).unwrap().coverage_fraction();
                assert!((f - 1.0 / 36.0).abs() < 1e-3, "side {side}: {f}");
            }
        }
    }

    #[test]
    fn side_smaller_than_dim_is_rejected() {
        let t = PatchTheta::regular(6, 0.25, 0.0, BoundaryKind::Bezier);
        assert!(matches!(rasterize_patch(&t, 5), Err(PatchError::SideTooSmall { side: 5, dim: 6 })));
        assert!(rasterize_patch(&t, 6).is_ok());
    }

    #[test]
    fn coverage_matches_polygon_area() {
        // one bulging cell: a quadratic Bezier cap has area 2/3 * base * apex
        // offset, and the apex sits halfway to the middle control point
        let mut t = PatchTheta::regular(1, 0.25, 0.0, BoundaryKind::Bezier);
        t.deltas[EdgeId::horizontal(0, 0).index(1)] = 0.3;
        let side = 400;
        let r = rasterize_patch(&t, side).unwrap();
        let d = side as f64;
        let expected = (d * d - 2.0 / 3.0 * d * (0.15 * d)) / (d * d);
        assert!((r.coverage_fraction() - expected).abs() < 2e-3, "{}", r.coverage_fraction());
    }

    #[test]
    fn feasible_random_grids_never_overlap_or_crack() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let t = random_feasible(&mut rng, 6);
            let claims = claim_subsamples(&t, 96, false).unwrap();
            assert_eq!(claims.conflicts, 0);
            assert_eq!(claims.claimed(), subsamples_inside_outline(&t, 96).unwrap());
        }
    }

    #[test]
    fn corner_collision_beyond_tangency_is_detected() {
        let mut t = PatchTheta::regular(6, 0.25, 0.0, BoundaryKind::Bezier);
        // top and left edges of cell (2, 2) both bulge into it
        t.deltas[EdgeId::horizontal(2, 2).index(6)] = 0.6;
        t.deltas[EdgeId::vertical(2, 2).index(6)] = 0.6;
        let claims = claim_subsamples(&t, 256, false).unwrap();
        assert!(claims.conflicts > 0);
    }
}
