use std::fmt;

use serde::{Deserialize, Serialize};

/// Feasibility bound on every edge deformation, in grid-spacing units.
/// Adjacent curves meeting at a corner become tangent at 0.5.
pub const TAU: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    #[default]
    Bezier,
    Straight,
    Polyline,
    CatmullRom,
}

impl BoundaryKind {
    pub const ALL: [BoundaryKind; 4] = [
        BoundaryKind::Bezier,
        BoundaryKind::Straight,
        BoundaryKind::Polyline,
        BoundaryKind::CatmullRom,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryKind::Bezier => "bezier",
            BoundaryKind::Straight => "straight",
            BoundaryKind::Polyline => "polyline",
            BoundaryKind::CatmullRom => "catmull_rom",
        }
    }
}

impl std::str::FromStr for BoundaryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown boundary kind {s:?}"))
    }
}

/// The universal perturbation: a `dim x dim` grid of curved blocks.
///
/// `deltas` holds one deformation per geometric grid edge, horizontals
/// first, each family row-major. The JSON field order matches the struct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchTheta {
    pub dim: usize,
    pub width_frac: f64,
    pub gray: f64,
    pub boundary_kind: BoundaryKind,
    pub deltas: Vec<f64>,
    pub mask: Vec<Vec<u8>>,
}

impl PatchTheta {
    /// Regular grid, every cell visible.
    pub fn regular(dim: usize, width_frac: f64, gray: f64, boundary_kind: BoundaryKind) -> Self {
        Self {
            dim,
            width_frac,
            gray,
            boundary_kind,
            deltas: vec![0.0; edge_count(dim)],
            mask: vec![vec![1; dim]; dim],
        }
    }

    pub fn is_visible(&self, row: usize, col: usize) -> bool {
        self.mask[row][col] == 1
    }

    pub fn visible_cells(&self) -> usize {
        self.mask.iter().flatten().filter(|&&b| b == 1).count()
    }

    pub fn delta(&self, edge: EdgeId) -> f64 {
        self.deltas[edge.index(self.dim)]
    }

    /// Clamps every deformation into `[-tau, tau]`.
    pub fn project(&mut self, tau: f64) {
        for d in &mut self.deltas {
            *d = project_delta(*d, tau);
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("theta serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Number of grid edges for a `dim x dim` block grid.
pub fn edge_count(dim: usize) -> usize {
    2 * dim * (dim + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Horizontal,
    Vertical,
}

/// A grid edge. Horizontal edges run along grid row `row` (`0..=dim`)
/// from column `col` to `col + 1`; vertical edges run along grid column
/// `col` (`0..=dim`) from row `row` to `row + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeId {
    pub orientation: Orientation,
    pub row: usize,
    pub col: usize,
}

impl EdgeId {
    pub fn horizontal(row: usize, col: usize) -> Self {
        Self {
            orientation: Orientation::Horizontal,
            row,
            col,
        }
    }

    pub fn vertical(row: usize, col: usize) -> Self {
        Self {
            orientation: Orientation::Vertical,
            row,
            col,
        }
    }

    pub fn is_valid(&self, dim: usize) -> bool {
        match self.orientation {
            Orientation::Horizontal => self.row <= dim && self.col < dim,
            Orientation::Vertical => self.row < dim && self.col <= dim,
        }
    }

    /// Position in `PatchTheta::deltas`. Panics on an edge outside the grid.
    pub fn index(&self, dim: usize) -> usize {
        assert!(self.is_valid(dim), "edge {self} outside a {dim}x{dim} grid");
        match self.orientation {
            Orientation::Horizontal => self.row * dim + self.col,
            Orientation::Vertical => dim * (dim + 1) + self.row * (dim + 1) + self.col,
        }
    }

    pub fn from_index(index: usize, dim: usize) -> Option<Self> {
        let half = dim * (dim + 1);
        if index < half {
            Some(Self::horizontal(index / dim, index % dim))
        } else if index < 2 * half {
            let k = index - half;
            Some(Self::vertical(k / (dim + 1), k % (dim + 1)))
        } else {
            None
        }
    }

    /// Top, right, bottom and left edges of cell `(row, col)`.
    pub fn cell_sides(row: usize, col: usize) -> [EdgeId; 4] {
        [
            Self::horizontal(row, col),
            Self::vertical(row, col + 1),
            Self::horizontal(row + 1, col),
            Self::vertical(row, col),
        ]
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = match self.orientation {
            Orientation::Horizontal => 'H',
            Orientation::Vertical => 'V',
        };
        write!(f, "{o}({},{})", self.row, self.col)
    }
}

/// Projection onto the feasible interval: `sgn(delta) * min(|delta|, tau)`.
pub fn project_delta(delta: f64, tau: f64) -> f64 {
    if delta.is_nan() {
        return 0.0;
    }
    delta.signum() * delta.abs().min(tau)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ZeroDim,
    DeltaCount { expected: usize, found: usize },
    DeltaOutOfRange { edge: EdgeId, value: f64 },
    MaskShape { expected: usize, rows: usize, bad_row: Option<usize> },
    MaskValue { row: usize, col: usize, value: u8 },
    WidthFrac(f64),
    Gray(f64),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ZeroDim => write!(f, "dim must be at least 1"),
            Violation::DeltaCount { expected, found } => {
                write!(f, "expected {expected} deltas, found {found}")
            }
            Violation::DeltaOutOfRange { edge, value } => {
                write!(f, "delta {value} on edge {edge} exceeds {TAU}")
            }
            Violation::MaskShape { expected, rows, bad_row } => match bad_row {
                Some(r) => write!(f, "mask row {r} does not have {expected} entries"),
                None => write!(f, "mask has {rows} rows, expected {expected}"),
            },
            Violation::MaskValue { row, col, value } => {
                write!(f, "mask[{row}][{col}] = {value}, expected 0 or 1")
            }
            Violation::WidthFrac(w) => write!(f, "width_frac {w} outside (0, 1]"),
            Violation::Gray(g) => write!(f, "gray {g} outside [0, 1]"),
        }
    }
}

/// Every structural problem with `theta`; empty when it is feasible.
pub fn validate_theta(theta: &PatchTheta) -> Vec<Violation> {
    let mut out = Vec::new();
    let dim = theta.dim;
    if dim == 0 {
        out.push(Violation::ZeroDim);
    }
    let expected = edge_count(dim);
    if theta.deltas.len() != expected {
        out.push(Violation::DeltaCount {
            expected,
            found: theta.deltas.len(),
        });
    } else {
        for (i, &d) in theta.deltas.iter().enumerate() {
            if d.is_nan() || d.abs() > TAU {
                let edge = EdgeId::from_index(i, dim).expect("index in range");
                out.push(Violation::DeltaOutOfRange { edge, value: d });
            }
        }
    }
    if theta.mask.len() != dim {
        out.push(Violation::MaskShape {
            expected: dim,
            rows: theta.mask.len(),
            bad_row: None,
        });
    }
    for (r, row) in theta.mask.iter().enumerate() {
        if row.len() != dim {
            out.push(Violation::MaskShape {
                expected: dim,
                rows: theta.mask.len(),
                bad_row: Some(r),
            });
        }
        for (c, &v) in row.iter().enumerate() {
            if v > 1 {
                out.push(Violation::MaskValue { row: r, col: c, value: v });
            }
        }
    }
    if !(theta.width_frac > 0.0 && theta.width_frac <= 1.0) {
        out.push(Violation::WidthFrac(theta.width_frac));
    }
    if !(0.0..=1.0).contains(&theta.gray) {
        out.push(Violation::Gray(theta.gray));
    }
    out
}
