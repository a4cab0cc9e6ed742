//! Gauss rules on the reference segment, square and triangle.

use crate::error::{Error, Result};
use crate::mesh::{CellType, Point};
use std::sync::OnceLock;

pub const MAX_ORDER: usize = 30;

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    points: Vec<Point>,
    weights: Vec<f64>,
    order: usize,
}

impl QuadratureRule {
    /// Reference points. For segment rules only the first coordinate is used.
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Polynomial degree integrated exactly.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Point, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn integrate(&self, f: impl Fn(Point) -> f64) -> f64 {
        self.iter().map(|(p, w)| w * f(p)).sum()
    }
}

fn check(order: usize) -> Result<()> {
    if order > MAX_ORDER {
        return Err(Error::QuadratureOrder(order));
    }
    Ok(())
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` with `n` points.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_and_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// 1D Gauss points on `[0,1]`, cached per point count.
fn unit_gauss(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<Vec<(Vec<f64>, Vec<f64>)>> = OnceLock::new();
    let table = CACHE.get_or_init(|| {
        (0..=MAX_ORDER / 2 + 2)
            .map(|n| {
                if n == 0 {
                    return (Vec::new(), Vec::new());
                }
                let (x, w) = gauss_legendre(n);
                (
                    x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
                    w.iter().map(|t| 0.5 * t).collect(),
                )
            })
            .collect()
    });
    &table[n]
}

fn points_for(order: usize) -> usize {
    order / 2 + 1
}

/// Gauss rule on `[0,1]` exact up to `order`; points are `[t, 0]`.
pub fn gauss_segment(order: usize) -> Result<QuadratureRule> {
    check(order)?;
    let (x, w) = unit_gauss(points_for(order));
    Ok(QuadratureRule {
        points: x.iter().map(|&t| [t, 0.0]).collect(),
        weights: w.clone(),
        order,
    })
}

/// Tensor Gauss rule on `[0,1]²` exact for `x^a y^b` with `a, b ≤ order`.
pub fn tensor_square(order: usize) -> Result<QuadratureRule> {
    check(order)?;
    let (x, w) = unit_gauss(points_for(order));
    let mut points = Vec::with_capacity(x.len() * x.len());
    let mut weights = Vec::with_capacity(x.len() * x.len());
    for (yj, wj) in x.iter().zip(w) {
        for (xi, wi) in x.iter().zip(w) {
            points.push([*xi, *yj]);
            weights.push(wi * wj);
        }
    }
    Ok(QuadratureRule { points, weights, order })
}

/// Collapsed (Duffy) rule on the unit triangle, exact up to total degree `order`.
pub fn triangle_rule(order: usize) -> Result<QuadratureRule> {
    check(order)?;
    let (s, ws) = unit_gauss(points_for(order));
    // The collapse Jacobian (1 - t) adds one degree in t.
    let (t, wt) = unit_gauss(points_for(order + 1));
    let mut points = Vec::with_capacity(s.len() * t.len());
    let mut weights = Vec::with_capacity(s.len() * t.len());
    for (tj, wj) in t.iter().zip(wt) {
        for (si, wi) in s.iter().zip(ws) {
            points.push([si * (1.0 - tj), *tj]);
            weights.push(wi * wj * (1.0 - tj));
        }
    }
    Ok(QuadratureRule { points, weights, order })
}

struct RuleTables {
    segment: Vec<QuadratureRule>,
    square: Vec<QuadratureRule>,
    triangle: Vec<QuadratureRule>,
}

fn tables() -> &'static RuleTables {
    static TABLES: OnceLock<RuleTables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let build =
            |f: fn(usize) -> Result<QuadratureRule>| (0..=MAX_ORDER).map(|o| f(o).expect("order in range")).collect();
        RuleTables {
            segment: build(gauss_segment),
            square: build(tensor_square),
            triangle: build(triangle_rule),
        }
    })
}

/// Shared rule on the reference element of `cell_type`.
pub fn element_rule(cell_type: CellType, order: usize) -> Result<&'static QuadratureRule> {
    check(order)?;
    let t = tables();
    Ok(match cell_type {
        CellType::Quad => &t.square[order],
        CellType::Triangle => &t.triangle[order],
    })
}

/// Shared rule on `[0,1]`.
pub fn segment_rule(order: usize) -> Result<&'static QuadratureRule> {
    check(order)?;
    Ok(&tables().segment[order])
}

/// Integration order for products involving degrees `k` and `k'`.
pub fn default_order(k: usize, k_other: usize) -> usize {
    (2 * k.max(k_other) + 2).min(MAX_ORDER)
}
