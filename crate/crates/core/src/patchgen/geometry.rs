//! Edge curves and cell outlines.
//!
//! Coordinates are patch-local with `y` growing downwards, one grid
//! spacing `d` per block. A horizontal edge's middle control point moves
//! along `+y`, a vertical edge's along `+x`.

use super::theta::{BoundaryKind, EdgeId, Orientation, PatchTheta};
use super::PatchError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn lerp(a: Point, b: Point, t: f64) -> Point {
        Point::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t)
    }

    fn dist(a: Point, b: Point) -> f64 {
        (a.x - b.x).hypot(a.y - b.y)
    }
}

/// Quadratic Bezier `(1-t)^2 p0 + 2t(1-t) p1 + t^2 p2` for `t` in `[0, 1]`.
pub fn bezier_point(p0: Point, p1: Point, p2: Point, t: f64) -> Result<Point, PatchError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(PatchError::ParamOutOfRange(t));
    }
    Ok(bezier_unchecked(p0, p1, p2, t))
}

#[inline]
fn bezier_unchecked(p0: Point, p1: Point, p2: Point, t: f64) -> Point {
    let s = 1.0 - t;
    let (a, b, c) = (s * s, 2.0 * t * s, t * t);
    Point::new(a * p0.x + b * p1.x + c * p2.x, a * p0.y + b * p1.y + c * p2.y)
}

/// Control points of `edge`: regular-grid endpoints and the axially locked
/// middle point `midpoint + delta * d * n`.
pub fn edge_geometry(theta: &PatchTheta, edge: EdgeId, spacing: f64) -> Result<[Point; 3], PatchError> {
    if !edge.is_valid(theta.dim) {
        return Err(PatchError::InvalidEdge(edge));
    }
    let delta = *theta
        .deltas
        .get(edge.index(theta.dim))
        .ok_or(PatchError::InvalidEdge(edge))?;
    Ok(control_points(edge, delta, spacing))
}

fn control_points(edge: EdgeId, delta: f64, d: f64) -> [Point; 3] {
    let p0 = Point::new(edge.col as f64 * d, edge.row as f64 * d);
    match edge.orientation {
        Orientation::Horizontal => {
            let p2 = Point::new(p0.x + d, p0.y);
            [p0, Point::new(p0.x + 0.5 * d, p0.y + delta * d), p2]
        }
        Orientation::Vertical => {
            let p2 = Point::new(p0.x, p0.y + d);
            [p0, Point::new(p0.x + delta * d, p0.y + 0.5 * d), p2]
        }
    }
}

/// `segments + 1` points along one edge, from `p0` to `p2`.
pub fn flatten_edge(kind: BoundaryKind, ctrl: [Point; 3], segments: usize) -> Vec<Point> {
    let [p0, p1, p2] = ctrl;
    let n = segments.max(1);
    (0..=n)
        .map(|k| {
            if k == 0 {
                return p0;
            }
            if k == n {
                return p2;
            }
            let t = k as f64 / n as f64;
            match kind {
                BoundaryKind::Bezier => bezier_unchecked(p0, p1, p2, t),
                BoundaryKind::Straight => Point::lerp(p0, p2, t),
                BoundaryKind::Polyline => {
                    if t <= 0.5 {
                        Point::lerp(p0, p1, 2.0 * t)
                    } else {
                        Point::lerp(p1, p2, 2.0 * t - 1.0)
                    }
                }
                BoundaryKind::CatmullRom => {
                    if t <= 0.5 {
                        catmull_rom(p0, p0, p1, p2, 2.0 * t)
                    } else {
                        catmull_rom(p0, p1, p2, p2, 2.0 * t - 1.0)
                    }
                }
            }
        })
        .collect()
}

/// Centripetal Catmull-Rom segment between `b` and `c` (Barry-Goldman
/// pyramid). Zero-length knot intervals from duplicated phantom endpoints
/// collapse to the shared point.
fn catmull_rom(a: Point, b: Point, c: Point, d: Point, u: f64) -> Point {
    let knot = |p: Point, q: Point| Point::dist(p, q).sqrt();
    let t0 = 0.0;
    let t1 = t0 + knot(a, b);
    let t2 = t1 + knot(b, c);
    let t3 = t2 + knot(c, d);
    if t2 == t1 {
        return b;
    }
    let t = t1 + (t2 - t1) * u;
    let mix = |p: Point, q: Point, ta: f64, tb: f64| {
        if tb == ta {
            p
        } else {
            Point::lerp(p, q, (t - ta) / (tb - ta))
        }
    };
    let a1 = mix(a, b, t0, t1);
    let a2 = mix(b, c, t1, t2);
    let a3 = mix(c, d, t2, t3);
    let b1 = mix(a1, a2, t0, t2);
    let b2 = mix(a2, a3, t1, t3);
    mix(b1, b2, t1, t2)
}

/// Flattened curve of every edge, indexed like `PatchTheta::deltas`.
/// Adjacent cells read their shared boundary from the same entry.
pub(crate) struct EdgeTable {
    pub dim: usize,
    pub segments: usize,
    pub curves: Vec<Vec<Point>>,
}

impl EdgeTable {
    pub fn build(theta: &PatchTheta, spacing: f64, segments: usize) -> Self {
        let dim = theta.dim;
        let curves = (0..theta.deltas.len())
            .map(|i| {
                let edge = EdgeId::from_index(i, dim).expect("delta count checked by caller");
                flatten_edge(theta.boundary_kind, control_points(edge, theta.deltas[i], spacing), segments)
            })
            .collect();
        Self {
            dim,
            segments: segments.max(1),
            curves,
        }
    }

    fn curve(&self, edge: EdgeId) -> &[Point] {
        &self.curves[edge.index(self.dim)]
    }

    /// Top, right, reversed bottom, reversed left: `4 * segments` vertices,
    /// positive signed area in `(x, y)`.
    pub fn cell_outline(&self, row: usize, col: usize) -> Vec<Point> {
        let n = self.segments;
        let [top, right, bottom, left] = EdgeId::cell_sides(row, col);
        let mut out = Vec::with_capacity(4 * n);
        out.extend_from_slice(&self.curve(top)[..n]);
        out.extend_from_slice(&self.curve(right)[..n]);
        out.extend(self.curve(bottom)[1..].iter().rev());
        out.extend(self.curve(left)[1..].iter().rev());
        out
    }

    /// Outer boundary of the whole grid, same orientation as the cells.
    pub fn patch_outline(&self) -> Vec<Point> {
        let (dim, n) = (self.dim, self.segments);
        let mut out = Vec::with_capacity(4 * dim * n);
        for c in 0..dim {
            out.extend_from_slice(&self.curve(EdgeId::horizontal(0, c))[..n]);
        }
        for r in 0..dim {
            out.extend_from_slice(&self.curve(EdgeId::vertical(r, dim))[..n]);
        }
        for c in (0..dim).rev() {
            out.extend(self.curve(EdgeId::horizontal(dim, c))[1..].iter().rev());
        }
        for r in (0..dim).rev() {
            out.extend(self.curve(EdgeId::vertical(r, 0))[1..].iter().rev());
        }
        out
    }
}

fn check_shape(theta: &PatchTheta) -> Result<(), PatchError> {
    if theta.dim == 0 || theta.deltas.len() != super::theta::edge_count(theta.dim) {
        return Err(PatchError::Malformed(format!(
            "dim {} with {} deltas",
            theta.dim,
            theta.deltas.len()
        )));
    }
    Ok(())
}

/// Closed outline of cell `(row, col)` as one polygon.
pub fn cell_outline(
    theta: &PatchTheta,
    row: usize,
    col: usize,
    spacing: f64,
    segments_per_edge: usize,
) -> Result<Vec<Point>, PatchError> {
    check_shape(theta)?;
    if row >= theta.dim || col >= theta.dim {
        return Err(PatchError::InvalidCell { row, col });
    }
    if segments_per_edge == 0 {
        return Err(PatchError::Malformed("segments_per_edge must be at least 1".into()));
    }
    Ok(EdgeTable::build(theta, spacing, segments_per_edge).cell_outline(row, col))
}

/// Closed outer boundary of the whole patch.
pub fn patch_outline(theta: &PatchTheta, spacing: f64, segments_per_edge: usize) -> Result<Vec<Point>, PatchError> {
    check_shape(theta)?;
    Ok(EdgeTable::build(theta, spacing, segments_per_edge.max(1)).patch_outline())
}

/// Shoelace area, positive for the orientation produced here.
pub fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
}
