//! Discrete function spaces over the leaves of a hierarchical mesh.
//!
//! A [`DiscreteFunctionSpace`] owns the mesh, one [`BasisFamily`], the local
//! keys and the [`DofMapper`]. Discrete functions are plain coefficient arrays
//! interpreted through a space; during adaptation every array that must
//! survive is handed to the space as a [`DataProjection`].
//!
//! h- and p-adaptation are separate transactions: [`DiscreteFunctionSpace::adapt_h`]
//! changes the grid under the old keys, [`DiscreteFunctionSpace::adapt_p`]
//! then applies the pending keys on the new grid.

mod projection;

pub use projection::{
    default_data_projection, local_l2_project, DataProjection, Discard, L2Projection, LocalTransfer, TransferSource,
};

use crate::basis::{BasisFamily, BasisFunctionSet, Key};
use crate::dof::DofMapper;
use crate::error::{Error, Result};
use crate::mesh::{AdaptationMarks, AdaptationReport, Element, ElementId, HierarchicalMesh, Point};
use crate::quadrature::default_order;
use std::collections::BTreeMap;

/// Local keys of the leaves plus keys requested for the next p-adaptation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DegreeMap {
    keys: BTreeMap<ElementId, Key>,
    pending: BTreeMap<ElementId, Key>,
}

impl DegreeMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: ElementId) -> Option<Key> {
        self.keys.get(&id).copied()
    }

    pub fn set(&mut self, id: ElementId, key: Key) {
        self.keys.insert(id, key);
    }

    pub fn remove(&mut self, id: ElementId) -> Option<Key> {
        self.keys.remove(&id)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ElementId, Key)> + '_ {
        self.keys.iter().map(|(&id, &k)| (id, k))
    }

    pub fn pending(&self) -> impl Iterator<Item = (ElementId, Key)> + '_ {
        self.pending.iter().map(|(&id, &k)| (id, k))
    }

    pub fn pending_key(&self, id: ElementId) -> Option<Key> {
        self.pending.get(&id).copied()
    }

    fn take_pending(&mut self) -> BTreeMap<ElementId, Key> {
        std::mem::take(&mut self.pending)
    }
}

impl FromIterator<(ElementId, Key)> for DegreeMap {
    fn from_iter<I: IntoIterator<Item = (ElementId, Key)>>(iter: I) -> Self {
        Self {
            keys: iter.into_iter().collect(),
            pending: BTreeMap::new(),
        }
    }
}

/// Global coefficient vector of a discrete function.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiscreteFunction {
    values: Vec<f64>,
}

impl DiscreteFunction {
    pub fn zeros(len: usize) -> Self {
        Self { values: vec![0.0; len] }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct DiscreteFunctionSpace {
    mesh: HierarchicalMesh,
    family: BasisFamily,
    degrees: DegreeMap,
    mapper: DofMapper,
}

impl DiscreteFunctionSpace {
    /// Space with the same key on every leaf.
    pub fn new(mesh: HierarchicalMesh, family: BasisFamily, key: Key) -> Result<Self> {
        Self::with_keys(mesh, family, |_| key)
    }

    pub fn with_keys(mesh: HierarchicalMesh, family: BasisFamily, key_of: impl Fn(&Element) -> Key) -> Result<Self> {
        let mut degrees = DegreeMap::new();
        let mut layout = Vec::with_capacity(mesh.num_leaves());
        for e in mesh.leaf_elements() {
            let key = key_of(e);
            layout.push((e.id(), family.blocks(e.cell_type(), key)?));
            degrees.set(e.id(), key);
        }
        Ok(Self {
            mapper: DofMapper::fresh_enumeration(&layout),
            mesh,
            family,
            degrees,
        })
    }

    pub fn mesh(&self) -> &HierarchicalMesh {
        &self.mesh
    }

    pub fn family(&self) -> BasisFamily {
        self.family
    }

    pub fn degrees(&self) -> &DegreeMap {
        &self.degrees
    }

    pub fn mapper(&self) -> &DofMapper {
        &self.mapper
    }

    /// `N`
    /// Restarts the mapper's peak index-space counter at the current size.
    pub fn reset_peak_index_space(&mut self) {
        self.mapper.reset_peak_index_space();
    }

    pub fn size(&self) -> usize {
        self.mapper.size()
    }

    pub fn key(&self, id: ElementId) -> Result<Key> {
        self.mesh.leaf(id)?;
        self.degrees.get(id).ok_or(Error::MissingDegree(id))
    }

    pub fn basis_set(&self, id: ElementId) -> Result<BasisFunctionSet> {
        let e = self.mesh.leaf(id)?;
        self.family.basis_function_set(e, self.key(id)?)
    }

    /// Global indices `μ_E(·)` of a leaf.
    pub fn indices(&self, id: ElementId) -> Result<Vec<usize>> {
        self.mesh.leaf(id)?;
        self.mapper.indices(id)
    }

    /// Requests `key` for `id` in the next [`adapt_p`](Self::adapt_p).
    pub fn mark(&mut self, id: ElementId, key: Key) -> Result<()> {
        let e = self.mesh.leaf(id)?;
        self.family.validate(e.cell_type(), key)?;
        self.degrees.pending.insert(id, key);
        Ok(())
    }

    pub fn zero_function(&self) -> DiscreteFunction {
        DiscreteFunction::zeros(self.size())
    }

    /// Element-wise `L²` projection of `f` (physical coordinates).
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> Result<DiscreteFunction> {
        let mut u = self.zero_function();
        for &id in self.mesh.leaves() {
            let set = self.basis_set(id)?;
            let k = set.key().degree();
            let local = local_l2_project(&set, default_order(k, k), &f)?;
            for (i, v) in self.mapper.block(id).expect("leaf has a block").iter().zip(local) {
                u.values[i] = v;
            }
        }
        Ok(u)
    }

    /// Local DOFs `u_{E,i}` gathered through `μ_E`.
    pub fn local_dofs(&self, u: &DiscreteFunction, id: ElementId) -> Result<Vec<f64>> {
        self.check_len(u)?;
        Ok(self.indices(id)?.into_iter().map(|i| u.values[i]).collect())
    }

    /// `u|_E` at a reference point of `E`.
    pub fn evaluate(&self, u: &DiscreteFunction, id: ElementId, xi: Point) -> Result<f64> {
        let dofs = self.local_dofs(u, id)?;
        Ok(self.basis_set(id)?.combine(&dofs, xi))
    }

    fn check_len(&self, u: &DiscreteFunction) -> Result<()> {
        if u.len() != self.size() {
            return Err(Error::DimensionMismatch {
                expected: self.size(),
                actual: u.len(),
            });
        }
        Ok(())
    }

    /// Applies the pending keys. Returns whether any local space changed.
    pub fn adapt_p(&mut self, projections: &mut [&mut dyn DataProjection]) -> Result<bool> {
        let pending = self.degrees.take_pending();
        let changed: Vec<(ElementId, Key)> = pending
            .into_iter()
            .filter(|&(id, k)| self.mesh.is_leaf(id) && self.degrees.get(id) != Some(k))
            .collect();
        if changed.is_empty() {
            return Ok(false);
        }
        let mut new_degrees = self.degrees.clone();
        for &(id, k) in &changed {
            new_degrees.set(id, k);
        }
        let old_keys = self.degrees.clone();
        let old_mesh_elements = |id: ElementId| self.mesh.element(id).cloned();
        let sources = |id: ElementId| -> Result<Vec<(Element, Key)>> {
            let e = old_mesh_elements(id).ok_or(Error::UnknownElement(id))?;
            Ok(vec![(e, old_keys.get(id).ok_or(Error::MissingDegree(id))?)])
        };
        self.mapper = self.run_transaction(&new_degrees, sources, projections)?;
        self.degrees.keys = new_degrees.keys;
        Ok(true)
    }

    /// Adapts the grid under the current keys. `transfer` assigns keys to
    /// the new leaf set (see `adapt::transfer_degrees`). Pending keys of
    /// leaves that disappear are dropped.
    pub fn adapt_h(
        &mut self,
        marks: &AdaptationMarks,
        transfer: &dyn Fn(&AdaptationReport, &DegreeMap) -> Result<DegreeMap>,
        projections: &mut [&mut dyn DataProjection],
    ) -> Result<AdaptationReport> {
        let report = self.mesh.adapt(marks)?;
        if report.is_empty() {
            return Ok(report);
        }
        let mut new_degrees = transfer(&report, &self.degrees)?;
        new_degrees.pending = std::mem::take(&mut self.degrees.pending);
        new_degrees.pending.retain(|id, _| self.mesh.is_leaf(*id));

        let fathers = report.new_leaf_fathers();
        let removed_children: BTreeMap<ElementId, &Vec<Element>> =
            report.coarsened.iter().map(|(f, kids)| (*f, kids)).collect();
        let old_keys = &self.degrees;
        let mesh = &self.mesh;
        let sources = |id: ElementId| -> Result<Vec<(Element, Key)>> {
            let key_of = |k: ElementId| old_keys.get(k).ok_or(Error::MissingDegree(k));
            if let Some(&father) = fathers.get(&id) {
                let e = mesh.element(father).ok_or(Error::UnknownElement(father))?;
                Ok(vec![(e.clone(), key_of(father)?)])
            } else if let Some(kids) = removed_children.get(&id) {
                kids.iter().map(|k| Ok((k.clone(), key_of(k.id())?))).collect()
            } else {
                let e = mesh.element(id).ok_or(Error::UnknownElement(id))?;
                Ok(vec![(e.clone(), key_of(id)?)])
            }
        };
        self.mapper = self.run_transaction(&new_degrees, sources, projections)?;
        self.degrees = new_degrees;
        Ok(report)
    }

    /// Steps 1–3 for the transition to `new_degrees` on the current leaves;
    /// returns the committed mapper.
    fn run_transaction(
        &self,
        new_degrees: &DegreeMap,
        sources: impl Fn(ElementId) -> Result<Vec<(Element, Key)>>,
        projections: &mut [&mut dyn DataProjection],
    ) -> Result<DofMapper> {
        let mut layout = Vec::with_capacity(self.mesh.num_leaves());
        for e in self.mesh.leaf_elements() {
            let key = new_degrees.get(e.id()).ok_or(Error::MissingDegree(e.id()))?;
            layout.push((e.id(), self.family.blocks(e.cell_type(), key)?));
        }
        // Work on a copy so the old blocks stay readable for the sources.
        let mut mapper = self.mapper.clone();
        let mut tx = mapper.begin_adapt(&layout)?;
        for p in projections.iter_mut() {
            p.resize(tx.half_size());
        }
        for change in tx.changes() {
            let id = change.element;
            let target_key = new_degrees.get(id).ok_or(Error::MissingDegree(id))?;
            let target = self.family.basis_function_set(self.mesh.leaf(id)?, target_key)?;
            let mut max_degree = target_key.degree();
            let mut srcs = Vec::new();
            for (e, key) in sources(id)? {
                max_degree = max_degree.max(key.degree());
                srcs.push(TransferSource {
                    set: self.family.basis_function_set(&e, key)?,
                    origin: self.mapper.indices(e.id())?,
                });
            }
            let transfer = LocalTransfer {
                target,
                destination: change.destination.clone(),
                sources: srcs,
                order: default_order(max_degree, max_degree),
            };
            for p in projections.iter_mut() {
                p.project(&transfer)?;
            }
        }
        tx.finish_projection();
        let new_size = tx.new_size();
        let relocations = mapper.commit(tx)?;
        for p in projections.iter_mut() {
            p.relocate(&relocations);
            p.resize(new_size);
        }
        Ok(mapper)
    }
}
