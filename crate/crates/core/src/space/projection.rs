//! Local `L²` projections and the data-transfer contract used during adaptation.

use crate::basis::{BasisFamily, BasisFunctionSet, FamilyKind, Jet, Key};
use crate::error::{Error, Result};
use crate::mesh::{AffineMap, CellType, ElementId, Point};
use crate::quadrature::{default_order, element_rule};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::DiscreteFunction;

type MassFactor = Arc<Cholesky<f64, Dyn>>;
type MassCache = Mutex<HashMap<(FamilyKind, CellType, Key), MassFactor>>;

/// Cholesky factor of the reference mass matrix of one local basis.
fn reference_mass(kind: FamilyKind, cell_type: CellType, key: Key) -> Result<MassFactor> {
    static CACHE: OnceLock<MassCache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(m) = cache.lock().expect("mass cache").get(&(kind, cell_type, key)) {
        return Ok(Arc::clone(m));
    }
    let family = BasisFamily::new(kind);
    let n = family.blocks(cell_type, key)?;
    let rule = element_rule(cell_type, default_order(key.degree(), key.degree()))?;
    let mut jets = vec![Jet::ZERO; n];
    let mut mass = DMatrix::<f64>::zeros(n, n);
    for (xi, w) in rule.iter() {
        crate::basis::reference_jets(kind, cell_type, key, xi, &mut jets);
        for i in 0..n {
            let wi = w * jets[i].value();
            for j in 0..=i {
                mass[(i, j)] += wi * jets[j].value();
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            mass[(j, i)] = mass[(i, j)];
        }
    }
    let chol = Arc::new(Cholesky::new(mass).ok_or(Error::SingularMass(ElementId::macro_element(0)))?);
    Ok(cache
        .lock()
        .expect("mass cache")
        .entry((kind, cell_type, key))
        .or_insert(chol)
        .clone())
}

/// Solves `M c = rhs` with the physical mass matrix of `set`.
fn solve_mass(set: &BasisFunctionSet, rhs: Vec<f64>) -> Result<Vec<f64>> {
    let chol =
        reference_mass(set.family(), set.cell_type(), set.key()).map_err(|_| Error::SingularMass(set.element()))?;
    let det = set.map().det().abs();
    let c = chol.solve(&DVector::from_vec(rhs)) / det;
    Ok(c.as_slice().to_vec())
}

/// Local `L²(E)` projection of a function given in physical coordinates onto
/// the span of `target`, integrated with a rule of the given order.
pub fn local_l2_project(target: &BasisFunctionSet, order: usize, f: impl Fn(Point) -> f64) -> Result<Vec<f64>> {
    let rule = element_rule(target.cell_type(), order)?;
    let det = target.map().det().abs();
    let mut rhs = vec![0.0; target.size()];
    let mut jets = Vec::new();
    for (xi, w) in rule.iter() {
        target.jets_into(xi, &mut jets);
        let v = w * det * f(target.map().map(xi));
        for (r, j) in rhs.iter_mut().zip(&jets) {
            *r += v * j.value();
        }
    }
    solve_mass(target, rhs)
}

/// One piece of the old local function feeding a [`LocalTransfer`].
#[derive(Clone, Debug)]
pub struct TransferSource {
    /// Basis of the old element (the element itself, its father or a former child).
    pub set: BasisFunctionSet,
    /// `μ^(m)` indices of the old element.
    pub origin: Vec<usize>,
}

/// The data transfer for one element whose local space changed.
#[derive(Clone, Debug)]
pub struct LocalTransfer {
    /// Future basis of the element.
    pub target: BasisFunctionSet,
    /// `μ^(m+1/2)` indices that receive the projection.
    pub destination: Vec<usize>,
    /// Old local functions covering the element.
    pub sources: Vec<TransferSource>,
    /// Quadrature order for the projection.
    pub order: usize,
}

impl LocalTransfer {
    pub fn element(&self) -> ElementId {
        self.target.element()
    }

    /// Projects the old local function, given by one coefficient slice per
    /// source, onto the future basis.
    pub fn project(&self, source_values: &[Vec<f64>]) -> Result<Vec<f64>> {
        if source_values.len() != self.sources.len() {
            return Err(Error::DimensionMismatch {
                expected: self.sources.len(),
                actual: source_values.len(),
            });
        }
        let target = &self.target;
        let mut rhs = vec![0.0; target.size()];
        let mut src_jets = Vec::new();
        let mut tgt_jets = Vec::new();
        for (src, coeffs) in self.sources.iter().zip(source_values) {
            // Integrate over the smaller of the two elements; it lies inside the other.
            let (region, cell): (&AffineMap, CellType) =
                if src.set.map().det().abs() < target.map().det().abs() * (1.0 - 1e-12) {
                    (src.set.map(), src.set.cell_type())
                } else {
                    (target.map(), target.cell_type())
                };
            let rule = element_rule(cell, self.order)?;
            let det = region.det().abs();
            for (xi, w) in rule.iter() {
                let x = region.map(xi);
                src.set.jets_into(src.set.map().inverse_map(x), &mut src_jets);
                target.jets_into(target.map().inverse_map(x), &mut tgt_jets);
                let u: f64 = coeffs.iter().zip(&src_jets).map(|(c, j)| c * j.value()).sum();
                let v = w * det * u;
                for (r, j) in rhs.iter_mut().zip(&tgt_jets) {
                    *r += v * j.value();
                }
            }
        }
        solve_mass(target, rhs)
    }
}

/// A DOF array that follows the space through an adaptation.
///
/// The space calls `resize` to `N^(m+1/2)`, `project` once per changed
/// element, `relocate` with the compaction moves, then `resize` to `N^(m+1)`.
pub trait DataProjection {
    fn resize(&mut self, len: usize);
    fn relocate(&mut self, relocations: &[(usize, usize)]);
    fn project(&mut self, transfer: &LocalTransfer) -> Result<()>;
}

fn relocate_values(values: &mut [f64], relocations: &[(usize, usize)]) {
    for &(from, to) in relocations {
        values[to] = values[from];
    }
}

/// Local `L²` projection of a discrete function.
pub struct L2Projection<'a> {
    function: &'a mut DiscreteFunction,
    scratch: Vec<Vec<f64>>,
}

impl<'a> L2Projection<'a> {
    pub fn new(function: &'a mut DiscreteFunction) -> Self {
        Self {
            function,
            scratch: Vec::new(),
        }
    }
}

/// The projection used when none is given explicitly.
pub fn default_data_projection(u: &mut DiscreteFunction) -> L2Projection<'_> {
    L2Projection::new(u)
}

impl DataProjection for L2Projection<'_> {
    fn resize(&mut self, len: usize) {
        self.function.values.resize(len, 0.0);
    }

    fn relocate(&mut self, relocations: &[(usize, usize)]) {
        relocate_values(&mut self.function.values, relocations);
    }

    fn project(&mut self, transfer: &LocalTransfer) -> Result<()> {
        let values = &mut self.function.values;
        let len = values.len();
        let check = |i: usize| {
            if i < len {
                Ok(())
            } else {
                Err(Error::IndexOutOfBounds { index: i, len })
            }
        };
        // Copy first: origin and destination may overlap.
        self.scratch.resize(transfer.sources.len(), Vec::new());
        for (buf, src) in self.scratch.iter_mut().zip(&transfer.sources) {
            buf.clear();
            for &i in &src.origin {
                check(i)?;
                buf.push(values[i]);
            }
        }
        let result = transfer.project(&self.scratch[..transfer.sources.len()])?;
        for (&i, v) in transfer.destination.iter().zip(result) {
            check(i)?;
            values[i] = v;
        }
        Ok(())
    }
}

/// Keeps the array sized and compacted but zero-initializes every changed
/// element instead of transferring data.
pub struct Discard<'a>(pub &'a mut DiscreteFunction);

impl DataProjection for Discard<'_> {
    fn resize(&mut self, len: usize) {
        self.0.values.resize(len, 0.0);
    }

    fn relocate(&mut self, relocations: &[(usize, usize)]) {
        relocate_values(&mut self.0.values, relocations);
    }

    fn project(&mut self, transfer: &LocalTransfer) -> Result<()> {
        for &i in &transfer.destination {
            let len = self.0.values.len();
            *self
                .0
                .values
                .get_mut(i)
                .ok_or(Error::IndexOutOfBounds { index: i, len })? = 0.0;
        }
        Ok(())
    }
}
