//! Thin-plate spline fitting and raster warping.

use nalgebra::DMatrix;

use super::{TransformError, TransformSample};
use crate::patchgen::{PatchRaster, Point};

/// Radial kernel `U(r) = r^2 log(r^2)`, taking `r^2` directly.
#[inline]
fn kernel(r2: f64) -> f64 {
    if r2 == 0.0 {
        0.0
    } else {
        r2 * r2.ln()
    }
}

/// Fitted spline `f(p) = a0 + a1 x + a2 y + sum_i w_i U(|p - s_i|)`, one set of
/// coefficients per output coordinate.
#[derive(Debug, Clone)]
pub struct TpsModel {
    sources: Vec<Point>,
    /// `[[a0, a1, a2] for x, [a0, a1, a2] for y]`
    affine: [[f64; 3]; 2],
    weights: Vec<[f64; 2]>,
}

impl TpsModel {
    pub fn sources(&self) -> &[Point] {
        &self.sources
    }

    pub fn affine(&self) -> [[f64; 3]; 2] {
        self.affine
    }

    pub fn weights(&self) -> &[[f64; 2]] {
        &self.weights
    }

    #[inline]
    pub fn map(&self, p: Point) -> Point {
        let [ax, ay] = self.affine;
        let mut x = ax[0] + ax[1] * p.x + ax[2] * p.y;
        let mut y = ay[0] + ay[1] * p.x + ay[2] * p.y;
        for (s, w) in self.sources.iter().zip(&self.weights) {
            let (dx, dy) = (p.x - s.x, p.y - s.y);
            let u = kernel(dx * dx + dy * dy);
            x += w[0] * u;
            y += w[1] * u;
        }
        Point::new(x, y)
    }
}

fn check_configuration(points: &[Point]) -> Result<(), TransformError> {
    let scale = points
        .iter()
        .flat_map(|a| points.iter().map(move |b| (a.x - b.x).hypot(a.y - b.y)))
        .fold(0.0, f64::max);
    if !scale.is_finite() || scale == 0.0 {
        return Err(TransformError::Singular("control points coincide".into()));
    }
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            if (a.x - b.x).hypot(a.y - b.y) <= 1e-9 * scale {
                return Err(TransformError::Singular("duplicate control point".into()));
            }
        }
    }
    // some triple must span a proper triangle
    let a = points[0];
    let far = points
        .iter()
        .copied()
        .max_by(|p, q| (p.x - a.x).hypot(p.y - a.y).total_cmp(&(q.x - a.x).hypot(q.y - a.y)))
        .expect("non-empty");
    let spread = points
        .iter()
        .map(|p| ((far.x - a.x) * (p.y - a.y) - (far.y - a.y) * (p.x - a.x)).abs())
        .fold(0.0, f64::max);
    if spread <= 1e-9 * scale * scale {
        return Err(TransformError::Singular("control points are collinear".into()));
    }
    Ok(())
}

/// Solves the interpolating spline that maps each `source[i]` to `target[i]`.
pub fn tps_fit(source: &[Point], target: &[Point]) -> Result<TpsModel, TransformError> {
    let n = source.len();
    if n != target.len() {
        return Err(TransformError::Invalid(format!(
            "{n} source points but {} targets",
            target.len()
        )));
    }
    if n < 3 {
        return Err(TransformError::Invalid(format!("{n} control points, need at least 3")));
    }
    check_configuration(source)?;

    let m = n + 3;
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DMatrix::<f64>::zeros(m, 2);
    for i in 0..n {
        for j in 0..n {
            let (dx, dy) = (source[i].x - source[j].x, source[i].y - source[j].y);
            a[(i, j)] = kernel(dx * dx + dy * dy);
        }
        let row = [1.0, source[i].x, source[i].y];
        for (k, v) in row.into_iter().enumerate() {
            a[(i, n + k)] = v;
            a[(n + k, i)] = v;
        }
        rhs[(i, 0)] = target[i].x;
        rhs[(i, 1)] = target[i].y;
    }
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| TransformError::Singular("spline system has no unique solution".into()))?;
    let weights = (0..n).map(|i| [sol[(i, 0)], sol[(i, 1)]]).collect();
    let affine = [
        [sol[(n, 0)], sol[(n + 1, 0)], sol[(n + 2, 0)]],
        [sol[(n, 1)], sol[(n + 1, 1)], sol[(n + 2, 1)]],
    ];
    let model = TpsModel {
        sources: source.to_vec(),
        affine,
        weights,
    };
    let extent = source
        .iter()
        .chain(target)
        .map(|p| p.x.abs().max(p.y.abs()))
        .fold(1.0, f64::max);
    for (s, t) in source.iter().zip(target) {
        let q = model.map(*s);
        if !((q.x - t.x).abs() <= 1e-7 * extent && (q.y - t.y).abs() <= 1e-7 * extent) {
            return Err(TransformError::Singular("ill-conditioned spline system".into()));
        }
    }
    Ok(model)
}

/// Regular `grid x grid` lattice spanning a raster of `side` pixels,
/// row-major.
pub fn lattice(grid: usize, side: usize) -> Vec<Point> {
    let step = side as f64 / (grid - 1) as f64;
    (0..grid)
        .flat_map(|j| (0..grid).map(move |i| Point::new(i as f64 * step, j as f64 * step)))
        .collect()
}

/// Source coordinate for every output pixel center, or `None` when the
/// sample carries no deformation.
pub(crate) fn warp_map(side: usize, sample: &TransformSample) -> Result<Option<Vec<Point>>, TransformError> {
    if sample.tps_offsets.iter().all(|o| o[0] == 0.0 && o[1] == 0.0) {
        return Ok(None);
    }
    let n = sample.tps_offsets.len();
    let grid = (n as f64).sqrt().round() as usize;
    if grid < 2 || grid * grid != n {
        return Err(TransformError::Invalid(format!("{n} offsets do not form a square lattice")));
    }
    let original = lattice(grid, side);
    let s = side as f64;
    let displaced: Vec<Point> = original
        .iter()
        .zip(&sample.tps_offsets)
        .map(|(p, o)| Point::new(p.x + o[0] * s, p.y + o[1] * s))
        .collect();
    // backward mapping: output position -> where to read in the input
    let model = tps_fit(&displaced, &original)?;
    let mut map = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            map.push(model.map(Point::new(x as f64 + 0.5, y as f64 + 0.5)));
        }
    }
    Ok(Some(map))
}

/// Bilinear read with zeros beyond the raster border.
#[inline]
fn sample_zero(raster: &PatchRaster, p: Point) -> f64 {
    let side = raster.side() as i64;
    let fx = p.x - 0.5;
    let fy = p.y - 0.5;
    let x0 = fx.floor();
    let y0 = fy.floor();
    let (tx, ty) = (fx - x0, fy - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let get = |x: i64, y: i64| {
        if x < 0 || y < 0 || x >= side || y >= side {
            0.0
        } else {
            raster.get(x as usize, y as usize)
        }
    };
    let top = get(x0, y0) * (1.0 - tx) + get(x0 + 1, y0) * tx;
    let bottom = get(x0, y0 + 1) * (1.0 - tx) + get(x0 + 1, y0 + 1) * tx;
    (top * (1.0 - ty) + bottom * ty).clamp(0.0, 1.0)
}

pub(crate) fn apply_map(raster: &PatchRaster, map: &[Point]) -> PatchRaster {
    let coverage = map.iter().map(|&p| sample_zero(raster, p)).collect();
    PatchRaster::new(raster.side(), coverage).expect("bilinear reads stay in [0, 1]")
}

/// Non-rigid deformation of the patch layer: the lattice offsets in
/// `sample` (fractions of the raster side) displace a regular control
/// lattice, and each output pixel reads the input where the spline from
/// the displaced lattice back to the regular one sends it.
pub fn tps_warp(raster: &PatchRaster, sample: &TransformSample) -> Result<PatchRaster, TransformError> {
    Ok(match warp_map(raster.side(), sample)? {
        None => raster.clone(),
        Some(map) => apply_map(raster, &map),
    })
}
