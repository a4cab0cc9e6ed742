//! Macro grids: the coarsest, conforming level of a hierarchical mesh.
//!
//! Text format, one item per line, `#` starts a comment:
//!
//! ```text
//! DIM 2
//! CELLTYPE quad
//! VERTEX 0 0
//! VERTEX 1 0
//! VERTEX 1 1
//! VERTEX 0 1
//! CELL 0 1 2 3
//! ```

use super::geometry::{signed_area, sub, CellType, Point};
use crate::error::{Error, Result};
use std::fmt::Write as _;

const GEOMETRY_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct MacroGrid {
    vertices: Vec<Point>,
    cells: Vec<Vec<usize>>,
    cell_type: CellType,
}

impl MacroGrid {
    /// Builds and validates a macro grid.
    pub fn new(cell_type: CellType, vertices: Vec<Point>, cells: Vec<Vec<usize>>) -> Result<Self> {
        let grid = Self {
            vertices,
            cells,
            cell_type,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn cell_type(&self) -> CellType {
        self.cell_type
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_vertices(&self, cell: usize) -> Vec<Point> {
        self.cells[cell].iter().map(|&v| self.vertices[v]).collect()
    }

    pub fn area(&self) -> f64 {
        (0..self.cells.len()).map(|c| signed_area(&self.cell_vertices(c))).sum()
    }

    fn validate(&self) -> Result<()> {
        let nv = self.cell_type.num_vertices();
        if self.cells.is_empty() {
            return Err(Error::InvalidGrid("no cells".into()));
        }
        for (c, cell) in self.cells.iter().enumerate() {
            if cell.len() != nv {
                return Err(Error::InvalidGrid(format!(
                    "cell {c} has {} vertices, expected {nv} for {} cells",
                    cell.len(),
                    self.cell_type
                )));
            }
            if let Some(&bad) = cell.iter().find(|&&v| v >= self.vertices.len()) {
                return Err(Error::InvalidGrid(format!(
                    "cell {c} references vertex {bad}, only {} vertices defined",
                    self.vertices.len()
                )));
            }
            let verts = self.cell_vertices(c);
            let area = signed_area(&verts);
            if !(area > GEOMETRY_EPS) {
                return Err(Error::Orientation { cell: c, area });
            }
            if self.cell_type == CellType::Quad && !is_axis_aligned_rectangle(&verts) {
                return Err(Error::InvalidGrid(format!("cell {c} is not an axis-aligned rectangle")));
            }
        }
        self.check_overlaps()
    }

    /// Pairwise separating-axis test; touching cells are fine, overlapping interiors are not.
    fn check_overlaps(&self) -> Result<()> {
        let polys: Vec<Vec<Point>> = (0..self.cells.len()).map(|c| self.cell_vertices(c)).collect();
        let boxes: Vec<[f64; 4]> = polys.iter().map(|p| bounding_box(p)).collect();
        for i in 0..polys.len() {
            for j in i + 1..polys.len() {
                let (a, b) = (&boxes[i], &boxes[j]);
                if a[2] <= b[0] + GEOMETRY_EPS
                    || b[2] <= a[0] + GEOMETRY_EPS
                    || a[3] <= b[1] + GEOMETRY_EPS
                    || b[3] <= a[1] + GEOMETRY_EPS
                {
                    continue;
                }
                if !separated(&polys[i], &polys[j]) {
                    return Err(Error::Overlap { first: i, second: j });
                }
            }
        }
        Ok(())
    }

    /// Parses the macro-grid text format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cell_type = None;
        let mut vertices = Vec::new();
        let mut cells = Vec::new();
        let mut cell_lines = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut tokens = content.split_whitespace();
            let keyword = tokens.next().expect("non-empty line");
            let rest: Vec<&str> = tokens.collect();
            let err = |message: String| Error::Parse { line, message };
            match keyword.to_ascii_uppercase().as_str() {
                "DIM" => {
                    if rest != ["2"] {
                        return Err(err(format!("only DIM 2 is supported, got {rest:?}")));
                    }
                }
                "CELLTYPE" => {
                    let [name] = rest.as_slice() else {
                        return Err(err("CELLTYPE expects one argument".into()));
                    };
                    cell_type = Some(match name.to_ascii_lowercase().as_str() {
                        "quad" => CellType::Quad,
                        "triangle" | "simplex" => CellType::Triangle,
                        other => return Err(err(format!("unknown cell type '{other}'"))),
                    });
                }
                "VERTEX" => {
                    let [x, y] = rest.as_slice() else {
                        return Err(err("VERTEX expects two coordinates".into()));
                    };
                    let parse = |s: &str| {
                        s.parse::<f64>()
                            .ok()
                            .filter(|v| v.is_finite())
                            .ok_or_else(|| err(format!("invalid coordinate '{s}'")))
                    };
                    vertices.push([parse(x)?, parse(y)?]);
                }
                "CELL" => {
                    if rest.len() != 3 && rest.len() != 4 {
                        return Err(err("CELL expects 3 or 4 vertex indices".into()));
                    }
                    let idx = rest
                        .iter()
                        .map(|s| {
                            s.parse::<usize>()
                                .map_err(|_| err(format!("invalid vertex index '{s}'")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    cells.push(idx);
                    cell_lines.push(line);
                }
                other => return Err(err(format!("unknown keyword '{other}'"))),
            }
        }
        let cell_type = match cell_type {
            Some(t) => t,
            None => {
                // Infer from the cells when CELLTYPE is omitted.
                match cells.first().map(Vec::len) {
                    Some(4) => CellType::Quad,
                    Some(3) => CellType::Triangle,
                    _ => {
                        return Err(Error::Parse {
                            line: text.lines().count().max(1),
                            message: "no CELLTYPE and no cells".into(),
                        })
                    }
                }
            }
        };
        for (cell, &line) in cells.iter().zip(&cell_lines) {
            if cell.len() != cell_type.num_vertices() {
                return Err(Error::Parse {
                    line,
                    message: format!("{} cell needs {} vertices", cell_type, cell_type.num_vertices()),
                });
            }
            if let Some(&bad) = cell.iter().find(|&&v| v >= vertices.len()) {
                return Err(Error::Parse {
                    line,
                    message: format!("vertex index {bad} out of range"),
                });
            }
        }
        Self::new(cell_type, vertices, cells)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("DIM 2\n");
        let _ = writeln!(out, "CELLTYPE {}", self.cell_type);
        for v in &self.vertices {
            let _ = writeln!(out, "VERTEX {:?} {:?}", v[0], v[1]);
        }
        for c in &self.cells {
            out.push_str("CELL");
            for v in c {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    /// Uniform `nx × ny` grid of rectangles over `[x0,x1] × [y0,y1]`.
    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize) -> Result<Self> {
        let mut b = GridBuilder::default();
        let hx = (x1 - x0) / nx as f64;
        let hy = (y1 - y0) / ny as f64;
        for j in 0..ny {
            for i in 0..nx {
                let xa = x0 + i as f64 * hx;
                let ya = y0 + j as f64 * hy;
                b.quad([xa, ya], [xa + hx, ya + hy]);
            }
        }
        Self::new(CellType::Quad, b.vertices, b.cells)
    }

    pub fn unit_square(n: usize) -> Result<Self> {
        Self::rectangle(0.0, 1.0, 0.0, 1.0, n, n)
    }

    /// L-shaped domain `(-1,1)² \ [0,1]×[-1,0]` with `n × n` squares per quadrant.
    pub fn l_shape(n: usize) -> Result<Self> {
        let mut b = GridBuilder::default();
        for (qx, qy) in l_shape_quadrants() {
            for j in 0..n {
                for i in 0..n {
                    let lo = l_shape_corner(qx, qy, i, j, n);
                    let hi = l_shape_corner(qx, qy, i + 1, j + 1, n);
                    b.quad(lo, hi);
                }
            }
        }
        Self::new(CellType::Quad, b.vertices, b.cells)
    }

    /// The L-shaped quad grid with every square cut along the diagonal that
    /// points toward the reentrant corner at the origin.
    pub fn l_shape_triangles(n: usize) -> Result<Self> {
        let quads = Self::l_shape(n)?;
        let mut cells = Vec::with_capacity(2 * quads.num_cells());
        for cell in quads.cells() {
            let [a, b, c, d] = [cell[0], cell[1], cell[2], cell[3]];
            let pa = quads.vertices[a];
            let pc = quads.vertices[c];
            let center = [0.5 * (pa[0] + pc[0]), 0.5 * (pa[1] + pc[1])];
            // (a,c) runs along (1,1), (b,d) along (-1,1).
            let along_ac = (center[0] + center[1]).abs();
            let along_bd = (center[1] - center[0]).abs();
            if along_ac >= along_bd {
                cells.push(vec![a, b, c]);
                cells.push(vec![a, c, d]);
            } else {
                cells.push(vec![a, b, d]);
                cells.push(vec![b, c, d]);
            }
        }
        Self::new(CellType::Triangle, quads.vertices, cells)
    }
}

fn l_shape_quadrants() -> [(f64, f64); 3] {
    // Lower-left corners of the retained quadrants: III, II, I.
    [(-1.0, -1.0), (-1.0, 0.0), (0.0, 0.0)]
}

fn l_shape_corner(qx: f64, qy: f64, i: usize, j: usize, n: usize) -> Point {
    let h = 1.0 / n as f64;
    [qx + i as f64 * h, qy + j as f64 * h]
}

#[derive(Default)]
struct GridBuilder {
    vertices: Vec<Point>,
    lookup: std::collections::HashMap<(u64, u64), usize>,
    cells: Vec<Vec<usize>>,
}

impl GridBuilder {
    fn vertex(&mut self, p: Point) -> usize {
        let key = (canonical_bits(p[0]), canonical_bits(p[1]));
        let next = self.vertices.len();
        let idx = *self.lookup.entry(key).or_insert(next);
        if idx == next {
            self.vertices.push(p);
        }
        idx
    }

    fn quad(&mut self, lo: Point, hi: Point) {
        let c = vec![
            self.vertex(lo),
            self.vertex([hi[0], lo[1]]),
            self.vertex(hi),
            self.vertex([lo[0], hi[1]]),
        ];
        self.cells.push(c);
    }
}

pub(crate) fn canonical_bits(x: f64) -> u64 {
    // +0.0 and -0.0 must hash alike.
    if x == 0.0 {
        0
    } else {
        x.to_bits()
    }
}

fn is_axis_aligned_rectangle(v: &[Point]) -> bool {
    let scale = v.iter().flat_map(|p| p.iter()).fold(1.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-12 * scale;
    (0..4).all(|i| {
        let e = sub(v[(i + 1) % 4], v[i]);
        (e[0].abs() <= tol) != (e[1].abs() <= tol)
    })
}

fn bounding_box(p: &[Point]) -> [f64; 4] {
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for q in p {
        b[0] = b[0].min(q[0]);
        b[1] = b[1].min(q[1]);
        b[2] = b[2].max(q[0]);
        b[3] = b[3].max(q[1]);
    }
    b
}

/// Separating-axis test for two convex counterclockwise polygons.
fn separated(a: &[Point], b: &[Point]) -> bool {
    for poly in [a, b] {
        for i in 0..poly.len() {
            let e = sub(poly[(i + 1) % poly.len()], poly[i]);
            let axis = [e[1], -e[0]];
            let project = |p: &[Point]| {
                p.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| {
                    let s = axis[0] * q[0] + axis[1] * q[1];
                    (lo.min(s), hi.max(s))
                })
            };
            let (alo, ahi) = project(a);
            let (blo, bhi) = project(b);
            let tol = GEOMETRY_EPS * (1.0 + axis[0].abs() + axis[1].abs());
            if ahi <= blo + tol || bhi <= alo + tol {
                return true;
            }
        }
    }
    false
}
