use std::fmt;

pub type Point = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellType {
    Quad,
    Triangle,
}

impl CellType {
    pub fn num_vertices(self) -> usize {
        match self {
            CellType::Quad => 4,
            CellType::Triangle => 3,
        }
    }

    /// Measure of the reference element: 1 for `[0,1]²`, 1/2 for the unit triangle.
    pub fn reference_measure(self) -> f64 {
        match self {
            CellType::Quad => 1.0,
            CellType::Triangle => 0.5,
        }
    }

    /// Whether a reference point lies in the closed reference element (with slack `eps`).
    pub fn contains_reference(self, p: Point, eps: f64) -> bool {
        match self {
            CellType::Quad => p[0] >= -eps && p[0] <= 1.0 + eps && p[1] >= -eps && p[1] <= 1.0 + eps,
            CellType::Triangle => p[0] >= -eps && p[1] >= -eps && p[0] + p[1] <= 1.0 + eps,
        }
    }
}

impl fmt::Display for CellType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellType::Quad => write!(f, "quad"),
            CellType::Triangle => write!(f, "triangle"),
        }
    }
}

/// Affine map `x = origin + J ξ` from a reference element onto a physical cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap {
    origin: Point,
    jacobian: [[f64; 2]; 2],
    inverse: [[f64; 2]; 2],
    det: f64,
}

impl AffineMap {
    /// Map with `F(0,0) = origin`, `F(1,0) = origin + e0`, `F(0,1) = origin + e1`.
    pub fn from_columns(origin: Point, e0: Point, e1: Point) -> Self {
        let jacobian = [[e0[0], e1[0]], [e0[1], e1[1]]];
        let det = e0[0] * e1[1] - e1[0] * e0[1];
        let inverse = [[e1[1] / det, -e1[0] / det], [-e0[1] / det, e0[0] / det]];
        Self {
            origin,
            jacobian,
            inverse,
            det,
        }
    }

    /// Reference map of a cell given by its counterclockwise vertices.
    pub fn for_cell(cell_type: CellType, vertices: &[Point]) -> Self {
        let v0 = vertices[0];
        let e0 = sub(vertices[1], v0);
        let e1 = match cell_type {
            CellType::Quad => sub(vertices[3], v0),
            CellType::Triangle => sub(vertices[2], v0),
        };
        Self::from_columns(v0, e0, e1)
    }

    pub fn map(&self, xi: Point) -> Point {
        let j = &self.jacobian;
        [
            self.origin[0] + j[0][0] * xi[0] + j[0][1] * xi[1],
            self.origin[1] + j[1][0] * xi[0] + j[1][1] * xi[1],
        ]
    }

    pub fn inverse_map(&self, x: Point) -> Point {
        let d = sub(x, self.origin);
        let k = &self.inverse;
        [k[0][0] * d[0] + k[0][1] * d[1], k[1][0] * d[0] + k[1][1] * d[1]]
    }

    pub fn jacobian(&self) -> &[[f64; 2]; 2] {
        &self.jacobian
    }

    pub fn inverse_jacobian(&self) -> &[[f64; 2]; 2] {
        &self.inverse
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    /// `DF^{-T} g`: turns a reference gradient into a physical one.
    pub fn push_gradient(&self, g: Point) -> Point {
        let k = &self.inverse;
        [k[0][0] * g[0] + k[1][0] * g[1], k[0][1] * g[0] + k[1][1] * g[1]]
    }

    /// Physical Laplacian `tr(DF^{-T} H DF^{-1})` from a reference Hessian `(h_xx, h_xy, h_yy)`.
    pub fn push_laplacian(&self, h: [f64; 3]) -> f64 {
        let k = &self.inverse;
        // Δ = Σ_m Σ_ij K_im K_jm H_ij
        let mut lap = 0.0;
        for (&a, &b) in k[0].iter().zip(&k[1]) {
            lap += a * a * h[0] + 2.0 * a * b * h[1] + b * b * h[2];
        }
        lap
    }
}

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

pub(crate) fn distance(a: Point, b: Point) -> f64 {
    let d = sub(a, b);
    d[0].hypot(d[1])
}

/// Signed area of a polygon (shoelace formula); positive when counterclockwise.
pub fn signed_area(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    let mut twice = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        twice += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * twice
}
