//! Gram–Schmidt orthonormalization of the graded monomials on the reference
//! square and triangle.
//!
//! Gram–Schmidt applied to the ordered monomials `m` is `φ = L⁻¹ m` with
//! `G = L Lᵀ` the Cholesky factorization of the monomial Gram matrix. `G`
//! is Hilbert-like and far too ill-conditioned to factor in floating point
//! beyond degree 5 or so, so the factor is obtained from a QR factorization
//! of the monomials expressed in an auxiliary orthonormal basis `ψ`
//! (normalized tensor Legendre on the square, Dubiner on the triangle):
//! with `m = A ψ` and `A = L Qᵀ`, `φ = Qᵀ ψ`.
//!
//! Both auxiliary bases are graded, so `A` is block lower triangular with one
//! diagonal block per total degree and the QR splits into small per-degree
//! factorizations. The functions of degree `d` are combinations of the
//! auxiliary functions of degree `d` only; the set of degree `k` is the
//! prefix of length `C(k+2, 2)` of the set of any higher degree.

use super::polynomials::{dubiner, graded_exponents, shifted_legendre, total_degree_dim, Jet};
use super::MAX_DEGREE;
use crate::mesh::CellType;
use crate::quadrature::element_rule;
use nalgebra::DMatrix;
use std::sync::OnceLock;

pub(crate) struct OrthonormalTable {
    cell_type: CellType,
    /// Per degree `d`: `(d+1)²` coefficients, row `r` gives function
    /// `offset(d) + r` in terms of auxiliary functions `offset(d)..offset(d+1)`.
    blocks: Vec<Vec<f64>>,
    /// Whether every block is the identity (square case).
    identity: bool,
    /// Lower-triangular Cholesky factor of the monomial Gram matrix.
    cholesky: DMatrix<f64>,
}

pub(crate) fn table(cell_type: CellType) -> &'static OrthonormalTable {
    static SQUARE: OnceLock<OrthonormalTable> = OnceLock::new();
    static TRIANGLE: OnceLock<OrthonormalTable> = OnceLock::new();
    match cell_type {
        CellType::Quad => SQUARE.get_or_init(|| OrthonormalTable::build(CellType::Quad)),
        CellType::Triangle => TRIANGLE.get_or_init(|| OrthonormalTable::build(CellType::Triangle)),
    }
}

/// Auxiliary orthonormal basis up to `degree` in graded order.
pub(crate) fn auxiliary(cell_type: CellType, xi: [f64; 2], degree: usize, out: &mut Vec<Jet>) {
    match cell_type {
        CellType::Triangle => dubiner(xi[0], xi[1], degree, out),
        CellType::Quad => {
            let mut px = [[0.0; 3]; MAX_DEGREE + 1];
            let mut py = [[0.0; 3]; MAX_DEGREE + 1];
            shifted_legendre(xi[0], &mut px[..=degree]);
            shifted_legendre(xi[1], &mut py[..=degree]);
            out.clear();
            for d in 0..=degree {
                for a in (0..=d).rev() {
                    let b = d - a;
                    let s = (((2 * a + 1) * (2 * b + 1)) as f64).sqrt();
                    out.push(Jet::tensor(px[a], py[b]).scale(s));
                }
            }
        }
    }
}

fn offset(d: usize) -> usize {
    d * (d + 1) / 2
}

impl OrthonormalTable {
    fn build(cell_type: CellType) -> Self {
        let n = total_degree_dim(MAX_DEGREE);
        let exps = graded_exponents(MAX_DEGREE);
        let rule = element_rule(cell_type, 2 * MAX_DEGREE).expect("order within range");
        // A[i][j] = (m_i, ψ_j)
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut aux = Vec::new();
        for (xi, w) in rule.iter() {
            auxiliary(cell_type, xi, MAX_DEGREE, &mut aux);
            for (i, &(ex, ey)) in exps.iter().enumerate() {
                let m = w * xi[0].powi(ex as i32) * xi[1].powi(ey as i32);
                // Only auxiliary functions of degree ≤ deg(m_i) are needed.
                let end = offset(ex + ey + 1);
                for (j, psi) in aux[..end].iter().enumerate() {
                    a[(i, j)] += m * psi.value();
                }
            }
        }

        let mut blocks = Vec::with_capacity(MAX_DEGREE + 1);
        let mut q_full = DMatrix::<f64>::zeros(n, n);
        let mut identity = true;
        for d in 0..=MAX_DEGREE {
            let (o, m) = (offset(d), d + 1);
            let block_t = a.view((o, o), (m, m)).transpose();
            let qr = block_t.qr();
            let mut q = qr.q();
            let r = qr.r();
            for c in 0..m {
                if r[(c, c)] < 0.0 {
                    q.column_mut(c).neg_mut();
                }
            }
            // Row r of the block holds function o + r: φ_r = Σ_j Q[j][r] ψ_j.
            let mut coeffs = vec![0.0; m * m];
            for row in 0..m {
                for j in 0..m {
                    coeffs[row * m + j] = q[(j, row)];
                    let expect = if row == j { 1.0 } else { 0.0 };
                    if (q[(j, row)] - expect).abs() > 1e-8 {
                        identity = false;
                    }
                }
            }
            q_full.view_mut((o, o), (m, m)).copy_from(&q);
            blocks.push(coeffs);
        }
        if identity {
            // Quadrature cancellation in the high-degree blocks leaves
            // rounding noise; the exact blocks are the identity.
            for (d, b) in blocks.iter_mut().enumerate() {
                let m = d + 1;
                for r in 0..m {
                    for c in 0..m {
                        b[r * m + c] = if r == c { 1.0 } else { 0.0 };
                    }
                }
            }
        }
        let mut cholesky = &a * &q_full;
        // Entries above the diagonal are rounding noise.
        for i in 0..n {
            for j in i + 1..n {
                cholesky[(i, j)] = 0.0;
            }
        }
        Self {
            cell_type,
            blocks,
            identity,
            cholesky,
        }
    }

    /// Orthonormal functions of total degree ≤ `degree` at `xi`.
    pub(crate) fn evaluate(&self, xi: [f64; 2], degree: usize, aux: &mut Vec<Jet>, out: &mut [Jet]) {
        auxiliary(self.cell_type, xi, degree, aux);
        if self.identity {
            out.copy_from_slice(&aux[..out.len()]);
            return;
        }
        for d in 0..=degree {
            let (o, m) = (offset(d), d + 1);
            let block = &self.blocks[d];
            for r in 0..m {
                let mut acc = Jet::ZERO;
                for (c, psi) in aux[o..o + m].iter().enumerate() {
                    acc.axpy(block[r * m + c], psi);
                }
                out[o + r] = acc;
            }
        }
    }

    pub(crate) fn cholesky(&self) -> &DMatrix<f64> {
        &self.cholesky
    }
}

/// Analytic Gram matrix of the graded monomials of degree ≤ `k`:
/// `1/((a+1)(b+1))` on the square, `a! b! / (a+b+2)!` on the triangle.
pub fn monomial_gram(cell_type: CellType, k: usize) -> DMatrix<f64> {
    let exps = graded_exponents(k);
    let n = exps.len();
    let integral = |a: usize, b: usize| -> f64 {
        match cell_type {
            CellType::Quad => 1.0 / ((a + 1) * (b + 1)) as f64,
            CellType::Triangle => {
                // a! b! / (a+b+2)! as a product of ratios to avoid overflow.
                let mut v = 1.0;
                for i in 1..=b {
                    v *= i as f64 / (a + i) as f64;
                }
                v / ((a + b + 1) * (a + b + 2)) as f64
            }
        }
    };
    DMatrix::from_fn(n, n, |i, j| {
        let (a1, b1) = exps[i];
        let (a2, b2) = exps[j];
        integral(a1 + a2, b1 + b2)
    })
}

/// Lower-triangular Cholesky factor `L` of [`monomial_gram`] (`G = L Lᵀ`)
/// for degree ≤ `k`; the orthonormal functions are `L⁻¹ m`.
pub fn gram_cholesky_factor(cell_type: CellType, k: usize) -> DMatrix<f64> {
    let n = total_degree_dim(k);
    table(cell_type).cholesky().view((0, 0), (n, n)).into_owned()
}
