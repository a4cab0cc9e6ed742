//! Fixtures shared by the benchmarks.

use hpdg_core::mesh::{AdaptationMarks, Mark};
use hpdg_core::{BasisFamily, HierarchicalMesh, Key, MacroGrid};
use hpdg_core::{DiscreteFunctionSpace, ElementId};

/// Benchmark grid of the given cell type with a uniform key.
pub fn l_shape_space(triangles: bool, k: usize) -> DiscreteFunctionSpace {
    let grid = if triangles {
        MacroGrid::l_shape_triangles(4)
    } else {
        MacroGrid::l_shape(4)
    }
    .expect("built-in grid");
    DiscreteFunctionSpace::new(HierarchicalMesh::new(grid), BasisFamily::orthonormal(), Key::Iso(k))
        .expect("valid degree")
}

/// Marks every `stride`-th leaf for refinement.
pub fn every_nth(leaves: &[ElementId], stride: usize) -> AdaptationMarks {
    let mut marks = AdaptationMarks::new();
    for &id in leaves.iter().step_by(stride) {
        marks.set(id, Mark::Refine);
    }
    marks
}
