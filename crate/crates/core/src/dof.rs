//! Global DOF mapping and its adaptation transaction.
//!
//! A [`DofMapper`] assigns every pair `(E, i)` of a leaf `E` and a local index
//! `i < n_E` a distinct global index in `0..N`. Adapting the discrete space
//! runs in three stages:
//!
//! 1. [`DofMapper::begin_adapt`] extends the mapping to the union of the old
//!    and new pair sets. Old pairs keep their indices, new pairs are appended
//!    past the old end in leaf order, then local index.
//! 2. The caller transfers data for every [`Change`] while both the old and
//!    the new indices are valid (see the `space` module).
//! 3. [`DofMapper::commit`] drops the pairs that left, keeps every surviving
//!    index below the new size, and moves the remaining ones into the freed
//!    slots ("holes"), both taken in ascending order.

use crate::error::{Error, Result};
use crate::mesh::{ElementId, HierarchicalMesh};
use std::collections::HashMap;

/// Global indices of one element.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Block {
    Contiguous { base: usize, len: usize },
    Explicit(Vec<usize>),
}

impl Block {
    fn from_indices(indices: Vec<usize>) -> Self {
        let contiguous = indices.windows(2).all(|w| w[1] == w[0] + 1);
        match indices.first() {
            Some(&base) if contiguous => Block::Contiguous {
                base,
                len: indices.len(),
            },
            None => Block::Contiguous { base: 0, len: 0 },
            _ => Block::Explicit(indices),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Block::Contiguous { len, .. } => *len,
            Block::Explicit(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `μ_E(i)`
    pub fn get(&self, i: usize) -> usize {
        match self {
            Block::Contiguous { base, len } => {
                assert!(i < *len, "local index {i} out of range {len}");
                base + i
            }
            Block::Explicit(v) => v[i],
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = usize> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }
}

/// Injective map from `(element, local index)` to `0..N`.
#[derive(Clone, Debug, Default)]
pub struct DofMapper {
    order: Vec<ElementId>,
    blocks: HashMap<ElementId, Block>,
    size: usize,
    in_transaction: bool,
    peak: usize,
}

impl PartialEq for DofMapper {
    fn eq(&self, other: &Self) -> bool {
        self.order == other.order && self.size == other.size && self.blocks == other.blocks
    }
}

impl DofMapper {
    /// Consecutive enumeration `μ_E(i) = Σ_{E' < E} n_{E'} + i` over `layout`.
    pub fn fresh_enumeration(layout: &[(ElementId, usize)]) -> Self {
        let mut blocks = HashMap::with_capacity(layout.len());
        let mut base = 0;
        for &(id, len) in layout {
            blocks.insert(id, Block::Contiguous { base, len });
            base += len;
        }
        Self {
            order: layout.iter().map(|&(id, _)| id).collect(),
            blocks,
            size: base,
            in_transaction: false,
            peak: base,
        }
    }

    /// Fresh enumeration over the leaves of `mesh` with sizes from `size_of`.
    pub fn for_mesh(mesh: &HierarchicalMesh, size_of: impl Fn(ElementId) -> usize) -> Self {
        let layout: Vec<_> = mesh.leaves().iter().map(|&id| (id, size_of(id))).collect();
        Self::fresh_enumeration(&layout)
    }

    /// `N`
    pub fn size(&self) -> usize {
        self.size
    }

    /// Elements in the order they were laid out.
    pub fn elements(&self) -> &[ElementId] {
        &self.order
    }

    pub fn num_elements(&self) -> usize {
        self.order.len()
    }

    pub fn block(&self, id: ElementId) -> Option<&Block> {
        self.blocks.get(&id)
    }

    pub fn num_local(&self, id: ElementId) -> Option<usize> {
        self.blocks.get(&id).map(Block::len)
    }

    /// Global indices of `id` as a vector.
    pub fn indices(&self, id: ElementId) -> Result<Vec<usize>> {
        self.blocks.get(&id).map(Block::to_vec).ok_or(Error::UnknownElement(id))
    }

    pub fn in_transaction(&self) -> bool {
        self.in_transaction
    }

    /// Largest index space `N^(m+1/2)` used by any transaction so far (or `N`
    /// for a mapper that never adapted).
    pub fn peak_index_space(&self) -> usize {
        self.peak
    }

    /// Restarts peak tracking at the current size.
    pub fn reset_peak_index_space(&mut self) {
        self.peak = self.size;
    }

    /// Step 1. `layout` lists the new leaves with their new block sizes, in
    /// leaf order. Elements not listed are removed.
    pub fn begin_adapt(&mut self, layout: &[(ElementId, usize)]) -> Result<AdaptationTransaction> {
        if self.in_transaction {
            return Err(Error::NestedTransaction);
        }
        let mut next = self.size;
        let mut changes = Vec::new();
        let mut new_blocks = HashMap::with_capacity(layout.len());
        let mut seen = std::collections::HashSet::with_capacity(layout.len());
        for &(id, n_new) in layout {
            if !seen.insert(id) {
                return Err(Error::InvalidGrid(format!("element {id} listed twice")));
            }
            let old = self.blocks.get(&id);
            let n_old = old.map_or(0, Block::len);
            let mut dest = Vec::with_capacity(n_new);
            for i in 0..n_new {
                if i < n_old {
                    dest.push(old.expect("n_old > 0").get(i));
                } else {
                    dest.push(next);
                    next += 1;
                }
            }
            if old.is_none() || n_old != n_new {
                changes.push(Change {
                    element: id,
                    origin: old.map(Block::to_vec).unwrap_or_default(),
                    destination: dest.clone(),
                    inserted: old.is_none(),
                });
            }
            new_blocks.insert(id, dest);
        }
        let removed = self.order.iter().copied().filter(|id| !seen.contains(id)).collect();
        let new_size = layout.iter().map(|&(_, n)| n).sum();
        self.in_transaction = true;
        self.peak = self.peak.max(next);
        Ok(AdaptationTransaction {
            old_size: self.size,
            half_size: next,
            new_size,
            order: layout.iter().map(|&(id, _)| id).collect(),
            blocks: new_blocks,
            changes,
            removed,
            projected: false,
        })
    }

    /// Step 3. Installs `μ^(m+1)` and returns the relocations `(from, to)`
    /// that the DOF storage must apply before truncating to the new size.
    pub fn commit(&mut self, tx: AdaptationTransaction) -> Result<Vec<(usize, usize)>> {
        if !self.in_transaction {
            return Err(Error::TransactionPhase("commit without begin_adapt"));
        }
        if !tx.projected {
            return Err(Error::TransactionPhase("commit before data projection finished"));
        }
        let n = tx.new_size;
        let mut used = vec![false; n];
        let mut high = Vec::new();
        for dest in tx.blocks.values() {
            for &g in dest {
                if g < n {
                    used[g] = true;
                } else {
                    high.push(g);
                }
            }
        }
        high.sort_unstable();
        let holes = used.iter().enumerate().filter(|(_, &u)| !u).map(|(h, _)| h);
        let relocation: Vec<(usize, usize)> = high.iter().copied().zip(holes).collect();
        debug_assert_eq!(relocation.len(), high.len());
        let target: HashMap<usize, usize> = relocation.iter().copied().collect();

        let mut blocks = HashMap::with_capacity(tx.blocks.len());
        for (id, dest) in tx.blocks {
            let moved = dest.into_iter().map(|g| if g < n { g } else { target[&g] }).collect();
            blocks.insert(id, Block::from_indices(moved));
        }
        self.order = tx.order;
        self.blocks = blocks;
        self.size = n;
        self.in_transaction = false;
        Ok(relocation)
    }

    /// Abandons a transaction, leaving the mapping unchanged.
    pub fn abort(&mut self, tx: AdaptationTransaction) {
        drop(tx);
        self.in_transaction = false;
    }
}

/// Origin and destination indices of an element whose local space changed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Change {
    pub element: ElementId,
    /// `μ^(m)(E, ·)`, empty for a newly inserted element.
    pub origin: Vec<usize>,
    /// `μ^(m+1/2)(E, ·)` over the new local indices.
    pub destination: Vec<usize>,
    /// The element is not a leaf of the old grid.
    pub inserted: bool,
}

/// Intermediate state between [`DofMapper::begin_adapt`] and
/// [`DofMapper::commit`].
#[derive(Debug)]
pub struct AdaptationTransaction {
    old_size: usize,
    half_size: usize,
    new_size: usize,
    order: Vec<ElementId>,
    blocks: HashMap<ElementId, Vec<usize>>,
    changes: Vec<Change>,
    removed: Vec<ElementId>,
    projected: bool,
}

impl AdaptationTransaction {
    /// `N^(m)`
    pub fn old_size(&self) -> usize {
        self.old_size
    }

    /// `N^(m+1/2) = |D^(m) ∪ D^(m+1)|`
    pub fn half_size(&self) -> usize {
        self.half_size
    }

    /// `N^(m+1)`
    pub fn new_size(&self) -> usize {
        self.new_size
    }

    /// Elements whose local space changed, in new leaf order.
    pub fn changes(&self) -> &[Change] {
        &self.changes
    }

    /// Old leaves that are not leaves of the new grid.
    pub fn removed(&self) -> &[ElementId] {
        &self.removed
    }

    /// `μ^(m+1/2)(E, ·)` for a new leaf.
    pub fn destination(&self, id: ElementId) -> Option<&[usize]> {
        self.blocks.get(&id).map(Vec::as_slice)
    }

    pub fn is_trivial(&self) -> bool {
        self.changes.is_empty() && self.removed.is_empty()
    }

    /// Marks Step 2 as done; [`DofMapper::commit`] refuses to run before.
    pub fn finish_projection(&mut self) {
        self.projected = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e(i: usize) -> ElementId {
        ElementId::macro_element(i)
    }

    fn commit(m: &mut DofMapper, layout: &[(ElementId, usize)]) -> Vec<(usize, usize)> {
        let mut tx = m.begin_adapt(layout).unwrap();
        tx.finish_projection();
        m.commit(tx).unwrap()
    }

    #[test]
    fn fresh_enumeration_is_consecutive() {
        let m = DofMapper::fresh_enumeration(&[(e(0), 3), (e(1), 1), (e(2), 2)]);
        assert_eq!(m.block(e(1)).unwrap().get(0), 3);
        assert_eq!(m.block(e(2)).unwrap().get(1), 5);
        assert_eq!(m.size(), 6);
        let single = DofMapper::fresh_enumeration(&[(e(0), 10)]);
        assert_eq!(single.indices(e(0)).unwrap(), (0..10).collect::<Vec<_>>());
        let layout: Vec<_> = (0..48).map(|i| (e(i), 10)).collect();
        assert_eq!(DofMapper::fresh_enumeration(&layout).size(), 480);
    }

    #[test]
    fn growth_appends_past_the_end() {
        let mut m = DofMapper::fresh_enumeration(&[(e(0), 2), (e(1), 1)]);
        let mut tx = m.begin_adapt(&[(e(0), 2), (e(1), 2)]).unwrap();
        assert_eq!(tx.half_size(), 4);
        assert_eq!(tx.changes().len(), 1);
        assert_eq!(tx.changes()[0].destination, vec![2, 3]);
        assert_eq!(tx.changes()[0].origin, vec![2]);
        tx.finish_projection();
        assert!(m.commit(tx).unwrap().is_empty());
        assert_eq!(m.indices(e(1)).unwrap(), vec![2, 3]);
    }

    #[test]
    fn no_changes_is_trivial() {
        let mut m = DofMapper::fresh_enumeration(&[(e(0), 2), (e(1), 1)]);
        let tx = m.begin_adapt(&[(e(0), 2), (e(1), 1)]).unwrap();
        assert!(tx.is_trivial());
        assert_eq!(tx.half_size(), 3);
        m.abort(tx);
        assert!(!m.in_transaction());
    }

    #[test]
    fn shrink_leaves_a_hole_that_is_refilled() {
        let mut m = DofMapper::fresh_enumeration(&[(e(0), 2), (e(1), 1)]);
        let mut tx = m.begin_adapt(&[(e(0), 1), (e(1), 2)]).unwrap();
        assert_eq!(tx.changes()[0].destination, vec![0]);
        assert_eq!(tx.changes()[1].destination, vec![2, 3]);
        assert_eq!(tx.new_size(), 3);
        tx.finish_projection();
        let reloc = m.commit(tx).unwrap();
        assert_eq!(reloc, vec![(3, 1)]);
        assert_eq!(m.indices(e(0)).unwrap(), vec![0]);
        assert_eq!(m.indices(e(1)).unwrap(), vec![2, 1]);
        assert!(matches!(m.block(e(1)), Some(Block::Explicit(_))));
    }

    #[test]
    fn nested_and_premature_commit_fail() {
        let mut m = DofMapper::fresh_enumeration(&[(e(0), 2)]);
        let tx = m.begin_adapt(&[(e(0), 3)]).unwrap();
        assert!(matches!(m.begin_adapt(&[(e(0), 3)]), Err(Error::NestedTransaction)));
        assert!(matches!(m.commit(tx), Err(Error::TransactionPhase(_))));
    }

    #[test]
    fn removal_of_elements() {
        let mut m = DofMapper::fresh_enumeration(&[(e(0), 2), (e(1), 2), (e(2), 2)]);
        let reloc = commit(&mut m, &[(e(1), 2), (e(2), 2)]);
        // indices 0,1 are holes; 4,5 move there
        assert_eq!(reloc, vec![(4, 0), (5, 1)]);
        assert_eq!(m.indices(e(2)).unwrap(), vec![0, 1]);
        assert_eq!(m.indices(e(1)).unwrap(), vec![2, 3]);
    }

    proptest! {
        #[test]
        fn image_is_contiguous_and_stable(
            sizes in prop::collection::vec(0usize..6, 1..12),
            steps in prop::collection::vec(prop::collection::vec((any::<bool>(), 0usize..6), 12), 1..6),
        ) {
            let mut next_id = sizes.len();
            let layout: Vec<_> = sizes.iter().enumerate().map(|(i, &n)| (e(i), n)).collect();
            let mut m = DofMapper::fresh_enumeration(&layout);
            let mut current = layout;
            for step in steps {
                let mut new_layout = Vec::new();
                for (j, &(id, n)) in current.iter().enumerate() {
                    let (keep, n_new) = step[j % step.len()];
                    if keep {
                        new_layout.push((id, if n_new % 2 == 0 { n } else { n_new }));
                    } else {
                        new_layout.push((e(next_id), n_new));
                        next_id += 1;
                    }
                }
                let before = m.clone();
                let mut tx = m.begin_adapt(&new_layout).unwrap();
                let old_n: usize = current.iter().map(|x| x.1).sum();
                let new_n: usize = new_layout.iter().map(|x| x.1).sum();
                prop_assert!(tx.half_size() <= old_n + new_n);
                tx.finish_projection();
                m.commit(tx).unwrap();
                let mut image: Vec<usize> =
                    new_layout.iter().flat_map(|&(id, _)| m.indices(id).unwrap()).collect();
                image.sort_unstable();
                prop_assert_eq!(image, (0..new_n).collect::<Vec<_>>());
                for &(id, n) in &new_layout {
                    if before.num_local(id) == Some(n) {
                        for (a, b) in before.indices(id).unwrap().iter().zip(m.indices(id).unwrap()) {
                            if *a < new_n {
                                prop_assert_eq!(*a, b);
                            }
                        }
                    }
                }
                current = new_layout;
            }
        }
    }
}
