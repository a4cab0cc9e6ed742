//! hp-adaptive symmetric interior penalty discontinuous Galerkin kernel for
//! the Poisson problem on hierarchically refined quadrilateral and triangular
//! grids with hanging nodes.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod basis;
pub mod benchmark;
pub mod dof;
pub mod error;
pub mod mesh;
pub mod quadrature;
pub mod sipg;
pub mod space;

pub use basis::{BasisFamily, BasisFunctionSet, FamilyKind, Key};
pub use dof::DofMapper;
pub use error::{Error, Result};
pub use mesh::{CellType, Element, ElementId, HierarchicalMesh, Intersection, MacroGrid};
pub use space::{DataProjection, DegreeMap, DiscreteFunction, DiscreteFunctionSpace};
