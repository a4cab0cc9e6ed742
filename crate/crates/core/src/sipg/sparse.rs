//! Compressed-row matrices and preconditioned conjugate gradients.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Square matrix in compressed row storage with sorted, unique columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    row_offsets: Vec<usize>,
    columns: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Zero matrix with the given pattern; `rows[i]` must be sorted and unique.
    pub fn from_pattern(rows: &[Vec<usize>]) -> Self {
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        row_offsets.push(0);
        let mut columns = Vec::with_capacity(rows.iter().map(Vec::len).sum());
        for r in rows {
            debug_assert!(r.windows(2).all(|w| w[0] < w[1]));
            columns.extend_from_slice(r);
            row_offsets.push(columns.len());
        }
        let values = vec![0.0; columns.len()];
        Self {
            row_offsets,
            columns,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        let rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let mut m = Self::from_pattern(&rows);
        m.values.fill(1.0);
        m
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows = vec![Vec::new(); n];
        for &(i, j, _) in triplets {
            rows[i].push(j);
        }
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
        }
        let mut m = Self::from_pattern(&rows);
        for &(i, j, v) in triplets {
            m.add(i, j, v);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.row_offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.columns[r.clone()], &self.values[r])
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (cols, _) = self.row(i);
        cols.binary_search(&j).ok().map(|p| self.row_offsets[i] + p)
    }

    /// Entry `(i, j)`, zero outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    /// Adds `v` to entry `(i, j)`, which must be in the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let p = self
            .position(i, j)
            .unwrap_or_else(|| panic!("({i}, {j}) outside the sparsity pattern"));
        self.values[p] += v;
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, v)| v * x[j]).sum();
        }
    }

    /// `max |A - Aᵀ|`
    pub fn asymmetry(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.dim() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m = m.max((v - self.get(j, i)).abs());
            }
        }
        m
    }

    /// Dense submatrix on the index set `idx` (rows and columns).
    pub fn dense_block(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.get(idx[a], idx[b]))
    }

    /// `xᵀ A x`
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; x.len()];
        self.mul_vec(x, &mut y);
        dot(x, &y)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub trait Preconditioner {
    /// `z = P⁻¹ r`
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

/// Exact inverses of the diagonal blocks belonging to disjoint index sets.
pub struct BlockJacobi {
    blocks: Vec<(Vec<usize>, Cholesky<f64, Dyn>)>,
}

impl BlockJacobi {
    pub fn new(a: &SparseMatrix, blocks: &[Vec<usize>]) -> Result<Self> {
        let mut out = Vec::with_capacity(blocks.len());
        for (b, idx) in blocks.iter().enumerate() {
            let chol = Cholesky::new(a.dense_block(idx)).ok_or(Error::IndefiniteBlock(b))?;
            out.push((idx.clone(), chol));
        }
        Ok(Self { blocks: out })
    }
}

impl Preconditioner for BlockJacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for (idx, chol) in &self.blocks {
            let rb = DVector::from_iterator(idx.len(), idx.iter().map(|&i| r[i]));
            let zb = chol.solve(&rb);
            for (&i, v) in idx.iter().zip(zb.iter()) {
                z[i] = *v;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual `‖b - A x‖ / ‖b‖`.
    pub residual: f64,
}

/// Preconditioned conjugate gradients from `x0` until `‖r‖ ≤ tol ‖b‖`.
pub fn solve_cg(
    a: &SparseMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iterations: usize,
    precond: &dyn Preconditioner,
) -> Result<CgResult> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: b.len(),
        });
    }
    let mut x = match x0 {
        Some(x0) if x0.len() == n => x0.to_vec(),
        Some(x0) => {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: x0.len(),
            })
        }
        None => vec![0.0; n],
    };
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(CgResult {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    a.mul_vec(&x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut residual = dot(&r, &r).sqrt() / b_norm;
    if residual <= tol {
        return Ok(CgResult {
            x,
            iterations: 0,
            residual,
        });
    }
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iterations {
        a.mul_vec(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if curvature <= 0.0 {
            return Err(Error::Breakdown {
                iteration: it,
                curvature,
            });
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        residual = dot(&r, &r).sqrt() / b_norm;
        if residual <= tol {
            return Ok(CgResult {
                x,
                iterations: it,
                residual,
            });
        }
        precond.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NotConverged {
        iterations: max_iterations,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        SparseMatrix::from_triplets(n, &t)
    }

    #[test]
    fn identity_converges_in_one_step() {
        let a = SparseMatrix::identity(5);
        let b = [1.0, -2.0, 3.0, 0.5, 4.0];
        let r = solve_cg(&a, &b, None, 1e-12, 10, &IdentityPreconditioner).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.x, b.to_vec());
    }

    #[test]
    fn warm_start_with_solution_takes_no_iterations() {
        let a = laplacian_1d(20);
        let x: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let mut b = vec![0.0; 20];
        a.mul_vec(&x, &mut b);
        let r = solve_cg(&a, &b, Some(&x), 1e-10, 100, &IdentityPreconditioner).unwrap();
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn block_jacobi_solves_tridiagonal() {
        let n = 30;
        let a = laplacian_1d(n);
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let blocks: Vec<Vec<usize>> = (0..n / 3).map(|k| (3 * k..3 * k + 3).collect()).collect();
        let pc = BlockJacobi::new(&a, &blocks).unwrap();
        let r = solve_cg(&a, &b, None, 1e-12, 200, &pc).unwrap();
        let mut ax = vec![0.0; n];
        a.mul_vec(&r.x, &mut ax);
        let err: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9);
        // a single block holding everything is the exact inverse
        let all = BlockJacobi::new(&a, &[(0..n).collect()]).unwrap();
        assert_eq!(solve_cg(&a, &b, None, 1e-12, 5, &all).unwrap().iterations, 1);
    }

    #[test]
    fn indefinite_matrix_breaks_down() {
        let a = SparseMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 1, -1.0)]);
        let res = solve_cg(&a, &[0.0, 1.0], None, 1e-12, 10, &IdentityPreconditioner);
        assert!(matches!(res, Err(Error::Breakdown { .. })));
    }

    #[test]
    fn asymmetry_and_pattern() {
        let m = SparseMatrix::from_triplets(2, &[(0, 1, 1.0), (1, 0, 3.0), (0, 1, 1.0)]);
        assert_eq!(m.get(0, 1), 2.0);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.asymmetry(), 1.0);
        assert_eq!(m.nnz(), 2);
    }
}
