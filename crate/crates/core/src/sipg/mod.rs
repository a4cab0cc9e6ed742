//! Symmetric interior penalty discretization of `-Δu = f`, `u = g` on `∂Ω`.
//!
//! With `⟦u⟧ = u_E ν_E + u_F ν_F` and `{v} = (v_E + v_F)/2` the bilinear form is
//!
//! ```text
//! B(u,ψ) = Σ_E ∫_E ∇u·∇ψ
//!        - Σ_int ∫_e ⟦u⟧·{∇ψ} + ⟦ψ⟧·{∇u}  + Σ_int ∫_e σ_e ⟦u⟧·⟦ψ⟧
//!        - Σ_bnd ∫_e u ∇ψ·ν + ψ ∇u·ν      + Σ_bnd ∫_e σ_e u ψ
//! l(ψ)   = ∫_Ω f ψ - Σ_bnd ∫_e g ∇ψ·ν + Σ_bnd ∫_e σ_e g ψ
//! ```
//!
//! with `σ_e = γ (k_E² + k_F²) / (2 h_e)` on interior and `γ k_E² / h_e` on
//! boundary facets.

mod norms;
mod sparse;

pub use norms::{dg_norm, error_norms, l2_norm, ErrorIntegration, ErrorNorms};
pub use sparse::{solve_cg, BlockJacobi, CgResult, IdentityPreconditioner, Preconditioner, SparseMatrix};

use crate::basis::{BasisFunctionSet, Jet};
use crate::error::{Error, Result};
use crate::mesh::{ElementId, Intersection, Point};
use crate::quadrature::{default_order, element_rule, segment_rule};
use crate::space::{DiscreteFunction, DiscreteFunctionSpace};

type ScalarField = Box<dyn Fn(Point) -> f64 + Send + Sync>;
type VectorField = Box<dyn Fn(Point) -> Point + Send + Sync>;

/// Source, boundary values, optional exact solution and penalty constant.
pub struct ProblemData {
    f: ScalarField,
    g: ScalarField,
    exact: Option<(ScalarField, VectorField)>,
    gamma: f64,
}

impl ProblemData {
    pub fn new(
        f: impl Fn(Point) -> f64 + Send + Sync + 'static,
        g: impl Fn(Point) -> f64 + Send + Sync + 'static,
        gamma: f64,
    ) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::Config(format!("penalty constant must be positive, got {gamma}")));
        }
        Ok(Self {
            f: Box::new(f),
            g: Box::new(g),
            exact: None,
            gamma,
        })
    }

    /// Attaches the exact solution and its gradient for error evaluation.
    pub fn with_exact(
        mut self,
        u: impl Fn(Point) -> f64 + Send + Sync + 'static,
        grad: impl Fn(Point) -> Point + Send + Sync + 'static,
    ) -> Self {
        self.exact = Some((Box::new(u), Box::new(grad)));
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::Config(format!("penalty constant must be positive, got {gamma}")));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn f(&self, x: Point) -> f64 {
        (self.f)(x)
    }

    pub fn g(&self, x: Point) -> f64 {
        (self.g)(x)
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn exact(&self, x: Point) -> Option<f64> {
        self.exact.as_ref().map(|(u, _)| u(x))
    }

    pub fn exact_gradient(&self, x: Point) -> Option<Point> {
        self.exact.as_ref().map(|(_, g)| g(x))
    }
}

/// `σ_e` of a facet given the degrees of its inside and (if interior) outside element.
pub fn penalty(facet: &Intersection, k_inside: usize, k_outside: Option<usize>, gamma: f64) -> Result<f64> {
    let h = facet.length();
    if !(h > 0.0) {
        return Err(Error::DegenerateFacet);
    }
    let ki = (k_inside * k_inside) as f64;
    match (facet.outside(), k_outside) {
        (None, _) => Ok(gamma * ki / h),
        (Some(_), Some(ko)) => Ok(gamma * (ki + (ko * ko) as f64) / (2.0 * h)),
        (Some(id), None) => Err(Error::MissingDegree(id)),
    }
}

/// Whether the facet is integrated from its inside element. Every interior
/// facet is visited from exactly one side: the finer one, or on equal levels
/// the one with the smaller id.
pub fn owns(facet: &Intersection) -> bool {
    match facet.outside() {
        None => true,
        Some(o) => {
            let i = facet.inside();
            i.level() > o.level() || (i.level() == o.level() && i < o)
        }
    }
}

/// Basis of one leaf evaluated at physical points.
pub(crate) struct LocalBasis {
    pub set: BasisFunctionSet,
    pub degree: usize,
    pub indices: Vec<usize>,
    jets: Vec<Jet>,
    pub values: Vec<f64>,
    pub grads: Vec<Point>,
}

impl LocalBasis {
    pub fn new(space: &DiscreteFunctionSpace, id: ElementId) -> Result<Self> {
        let set = space.basis_set(id)?;
        let n = set.size();
        Ok(Self {
            degree: set.key().degree(),
            indices: space.indices(id)?,
            set,
            jets: Vec::with_capacity(n),
            values: vec![0.0; n],
            grads: vec![[0.0; 2]; n],
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Values and physical gradients at the physical point `x`.
    pub fn eval(&mut self, x: Point) {
        let xi = self.set.map().inverse_map(x);
        self.set.jets_into(xi, &mut self.jets);
        for ((v, g), j) in self.values.iter_mut().zip(&mut self.grads).zip(&self.jets) {
            *v = j.value();
            *g = self.set.map().push_gradient(j.gradient());
        }
    }

    /// Value and gradient of `Σ c_i φ_i` after [`eval`](Self::eval).
    pub fn combine(&self, c: &[f64]) -> (f64, Point) {
        let mut v = 0.0;
        let mut g = [0.0; 2];
        for ((ci, vi), gi) in c.iter().zip(&self.values).zip(&self.grads) {
            v += ci * vi;
            g[0] += ci * gi[0];
            g[1] += ci * gi[1];
        }
        (v, g)
    }

    pub fn gather(&self, u: &DiscreteFunction) -> Vec<f64> {
        self.indices.iter().map(|&i| u.values()[i]).collect()
    }
}

/// Physical quadrature points and weights on a facet.
pub(crate) fn facet_points(facet: &Intersection, order: usize) -> Result<Vec<(Point, f64, f64)>> {
    let rule = segment_rule(order)?;
    Ok(rule
        .iter()
        .map(|(t, w)| (facet.point(t[0]), w * facet.length(), t[0]))
        .collect())
}

/// Assembled linear system with the index blocks of every leaf.
pub struct DiscreteSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    /// Global indices of each leaf, in leaf order.
    pub blocks: Vec<Vec<usize>>,
}

impl DiscreteSystem {
    /// Block-Jacobi preconditioned CG, started from `x0` when given.
    pub fn solve(&self, x0: Option<&[f64]>, tol: f64, max_iterations: usize) -> Result<CgResult> {
        let pc = BlockJacobi::new(&self.matrix, &self.blocks)?;
        solve_cg(&self.matrix, &self.rhs, x0, tol, max_iterations, &pc)
    }
}

struct Scatter<'a> {
    matrix: &'a mut SparseMatrix,
}

impl Scatter<'_> {
    fn block(&mut self, rows: &[usize], cols: &[usize], local: &[f64]) {
        let m = cols.len();
        for (a, &r) in rows.iter().enumerate() {
            for (b, &c) in cols.iter().enumerate() {
                let v = local[a * m + b];
                if v != 0.0 {
                    self.matrix.add(r, c, v);
                }
            }
        }
    }
}

/// Assembles `A_{μ(F,j), μ(E,i)} = B(φ_{E,i}, φ_{F,j})` and `b = l(φ)`.
pub fn assemble(space: &DiscreteFunctionSpace, data: &ProblemData) -> Result<DiscreteSystem> {
    let mesh = space.mesh();
    let gamma = data.gamma();
    let n = space.size();

    let mut blocks = Vec::with_capacity(mesh.num_leaves());
    for &id in mesh.leaves() {
        let k = space.key(id)?.degree();
        if k < 1 {
            return Err(Error::DegreeTooLow {
                element: id,
                degree: k,
                minimum: 1,
            });
        }
        blocks.push(space.indices(id)?);
    }

    // Element-block pattern: each row of E couples to E and its neighbors.
    let mut rows = vec![Vec::new(); n];
    for (p, &id) in mesh.leaves().iter().enumerate() {
        let mut cols = blocks[p].clone();
        for facet in mesh.intersections(id) {
            if let Some(o) = facet.outside() {
                let q = mesh.leaf_position(o).expect("neighbor is a leaf");
                cols.extend_from_slice(&blocks[q]);
            }
        }
        cols.sort_unstable();
        cols.dedup();
        for &r in &blocks[p] {
            rows[r] = cols.clone();
        }
    }
    let mut matrix = SparseMatrix::from_pattern(&rows);
    drop(rows);
    let mut rhs = vec![0.0; n];

    for (p, &id) in mesh.leaves().iter().enumerate() {
        let mut inside = LocalBasis::new(space, id)?;
        let ni = inside.len();
        let k = inside.degree;

        // Volume terms.
        let mut local = vec![0.0; ni * ni];
        let rule = element_rule(inside.set.cell_type(), default_order(k, k))?;
        let tab = inside.set.tabulate(rule);
        let map = *inside.set.map();
        let det = map.det().abs();
        let mut grads = vec![[0.0; 2]; ni];
        for (q, (xi, w)) in rule.iter().enumerate() {
            let jets = tab.at(q);
            for (g, j) in grads.iter_mut().zip(jets) {
                *g = map.push_gradient(j.gradient());
            }
            let wd = w * det;
            let fx = data.f(map.map(xi));
            for i in 0..ni {
                rhs[blocks[p][i]] += wd * fx * jets[i].value();
                let gi = grads[i];
                for j in 0..ni {
                    local[i * ni + j] += wd * (gi[0] * grads[j][0] + gi[1] * grads[j][1]);
                }
            }
        }
        Scatter { matrix: &mut matrix }.block(&blocks[p], &blocks[p], &local);

        // Facet terms.
        for facet in mesh.intersections(id) {
            if !owns(facet) {
                continue;
            }
            let nu = facet.normal();
            match facet.outside() {
                None => {
                    let sigma = penalty(facet, k, None, gamma)?;
                    local.iter_mut().for_each(|v| *v = 0.0);
                    for (x, w, _) in facet_points(facet, default_order(k, k))? {
                        inside.eval(x);
                        let gx = data.g(x);
                        for i in 0..ni {
                            let (vi, dni) = (inside.values[i], dot2(inside.grads[i], nu));
                            rhs[blocks[p][i]] += w * (-gx * dni + sigma * gx * vi);
                            for j in 0..ni {
                                let (vj, dnj) = (inside.values[j], dot2(inside.grads[j], nu));
                                local[i * ni + j] += w * (-vj * dni - vi * dnj + sigma * vi * vj);
                            }
                        }
                    }
                    Scatter { matrix: &mut matrix }.block(&blocks[p], &blocks[p], &local);
                }
                Some(o) => {
                    let mut outside = LocalBasis::new(space, o)?;
                    let q = mesh.leaf_position(o).expect("neighbor is a leaf");
                    let no = outside.len();
                    let sigma = penalty(facet, k, Some(outside.degree), gamma)?;
                    // [test side][trial side] blocks, side 0 = inside (s = +1), 1 = outside (s = -1).
                    let sizes = [ni, no];
                    let mut local4: [Vec<f64>; 4] = [
                        vec![0.0; ni * ni],
                        vec![0.0; ni * no],
                        vec![0.0; no * ni],
                        vec![0.0; no * no],
                    ];
                    for (x, w, _) in facet_points(facet, default_order(k, outside.degree))? {
                        inside.eval(x);
                        outside.eval(x);
                        let sides = [&inside, &outside];
                        let sign = [1.0, -1.0];
                        for b in 0..2 {
                            for a in 0..2 {
                                let blk = &mut local4[2 * b + a];
                                let (tb, ta) = (sides[b], sides[a]);
                                let sab = sign[a] * sign[b];
                                for i in 0..sizes[b] {
                                    let vi = tb.values[i];
                                    let dni = dot2(tb.grads[i], nu);
                                    for j in 0..sizes[a] {
                                        let vj = ta.values[j];
                                        let dnj = dot2(ta.grads[j], nu);
                                        blk[i * sizes[a] + j] += w
                                            * (-0.5 * sign[a] * vj * dni - 0.5 * sign[b] * vi * dnj
                                                + sigma * sab * vi * vj);
                                    }
                                }
                            }
                        }
                    }
                    let idx = [&blocks[p], &blocks[q]];
                    let mut s = Scatter { matrix: &mut matrix };
                    for b in 0..2 {
                        for a in 0..2 {
                            s.block(idx[b], idx[a], &local4[2 * b + a]);
                        }
                    }
                }
            }
        }
    }
    Ok(DiscreteSystem { matrix, rhs, blocks })
}

pub(crate) fn dot2(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{BasisFamily, Key};
    use crate::mesh::{HierarchicalMesh, MacroGrid};

    fn facet(len: f64, interior: bool) -> Intersection {
        let mesh = HierarchicalMesh::new(MacroGrid::rectangle(0.0, 2.0 * len, 0.0, len, 2, 1).unwrap());
        let id = mesh.leaves()[0];
        mesh.intersections(id)
            .iter()
            .find(|f| f.is_boundary() != interior)
            .unwrap()
            .clone()
    }

    #[test]
    fn penalty_values() {
        let e = facet(0.5, true);
        assert!((penalty(&e, 3, Some(3), 10.0).unwrap() - 180.0).abs() < 1e-12);
        let b = facet(0.25, false);
        assert!((penalty(&b, 3, None, 10.0).unwrap() - 360.0).abs() < 1e-12);
        assert!((penalty(&b, 3, None, 20.0).unwrap() - 720.0).abs() < 1e-12);
        // doubling both degrees scales by four
        let s1 = penalty(&e, 2, Some(5), 7.0).unwrap();
        let s2 = penalty(&e, 4, Some(10), 7.0).unwrap();
        assert!((s2 - 4.0 * s1).abs() < 1e-12 * s2);
        assert!(matches!(penalty(&e, 3, None, 10.0), Err(Error::MissingDegree(_))));
    }

    #[test]
    fn each_interior_facet_is_owned_once() {
        let mut mesh = HierarchicalMesh::new(MacroGrid::unit_square(2).unwrap());
        let first = mesh.leaves()[0];
        mesh.refine(&[first]).unwrap();
        let first_child = mesh.leaves()[0];
        mesh.refine(&[first_child]).unwrap();
        let mut owned = 0.0;
        let mut total = 0.0;
        for &id in mesh.leaves() {
            for f in mesh.intersections(id) {
                if !f.is_boundary() {
                    total += f.length();
                    if owns(f) {
                        owned += f.length();
                    }
                }
            }
        }
        assert!((2.0 * owned - total).abs() < 1e-14);
    }

    #[test]
    fn zero_data_gives_zero_rhs_and_symmetric_matrix() {
        let mut mesh = HierarchicalMesh::new(MacroGrid::l_shape_triangles(1).unwrap());
        let first = mesh.leaves()[0];
        mesh.refine(&[first]).unwrap();
        let space = DiscreteFunctionSpace::new(mesh, BasisFamily::orthonormal(), Key::Iso(3)).unwrap();
        let data = ProblemData::new(|_| 0.0, |_| 0.0, 10.0).unwrap();
        let sys = assemble(&space, &data).unwrap();
        assert!(sys.rhs.iter().all(|&v| v == 0.0));
        let scale = (0..sys.matrix.dim()).map(|i| sys.matrix.get(i, i)).fold(0.0, f64::max);
        assert!(sys.matrix.asymmetry() < 1e-11 * scale.max(1.0));
    }

    #[test]
    fn linear_solution_is_reproduced_on_one_element() {
        let mesh = HierarchicalMesh::new(MacroGrid::unit_square(1).unwrap());
        let space = DiscreteFunctionSpace::new(mesh, BasisFamily::orthonormal(), Key::Iso(1)).unwrap();
        let u = |x: Point| 1.0 + 2.0 * x[0] - 3.0 * x[1];
        let data = ProblemData::new(|_| 0.0, u, 10.0)
            .unwrap()
            .with_exact(u, |_| [2.0, -3.0]);
        let sys = assemble(&space, &data).unwrap();
        let sol = sys.solve(None, 1e-14, 100).unwrap();
        let uh = DiscreteFunction::from_values(sol.x);
        let err = error_norms(&space, &uh, &data, &ErrorIntegration::default()).unwrap();
        assert!(err.l2 < 1e-10, "{}", err.l2);
    }

    #[test]
    fn gamma_must_be_positive() {
        assert!(ProblemData::new(|_| 0.0, |_| 0.0, 0.0).is_err());
        assert!(ProblemData::new(|_| 0.0, |_| 0.0, -1.0).is_err());
    }
}
