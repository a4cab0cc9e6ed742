//! Local basis function sets and the families that produce them.
//!
//! Three families share one interface:
//!
//! * [`FamilyKind::Orthonormal`]: monomials `x^α`, `|α| ≤ k`, orthonormalized in
//!   `L²` of the reference square or triangle (`C(k+2,2)` functions);
//! * [`FamilyKind::LegendreTensor`]: products `p_a(x) p_b(y)`, `a, b ≤ k`, of
//!   shifted Legendre polynomials on axis-aligned quads (`(k+1)²` functions);
//! * [`FamilyKind::AnisotropicLegendre`]: the same with separate degree bounds
//!   per direction (`(k_x+1)(k_y+1)` functions).
//!
//! A set is bound to one element; physical functions are `φ ∘ F_E⁻¹`.

mod orthonormal;
mod polynomials;

pub use orthonormal::{gram_cholesky_factor, monomial_gram};
pub use polynomials::{graded_exponents, shifted_legendre, total_degree_dim, Jet};

use crate::error::{Error, Result};
use crate::mesh::{AffineMap, CellType, Element, ElementId, Point};
use crate::quadrature::QuadratureRule;
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

/// Highest polynomial degree any family supports.
pub const MAX_DEGREE: usize = 10;

/// Local polynomial degree: isotropic, or one degree per direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Key {
    Iso(usize),
    Aniso(usize, usize),
}

impl Key {
    /// Largest degree in any direction.
    pub fn degree(self) -> usize {
        match self {
            Key::Iso(k) => k,
            Key::Aniso(kx, ky) => kx.max(ky),
        }
    }

    /// Componentwise maximum; mixed variants compare by `degree`.
    pub fn max(self, other: Key) -> Key {
        match (self, other) {
            (Key::Iso(a), Key::Iso(b)) => Key::Iso(a.max(b)),
            (Key::Aniso(a, b), Key::Aniso(c, d)) => Key::Aniso(a.max(c), b.max(d)),
            (a, b) => {
                if a.degree() >= b.degree() {
                    a
                } else {
                    b
                }
            }
        }
    }

    /// Key with every degree replaced by `f(degree)`.
    pub fn map(self, f: impl Fn(usize) -> usize) -> Key {
        match self {
            Key::Iso(k) => Key::Iso(f(k)),
            Key::Aniso(kx, ky) => Key::Aniso(f(kx), f(ky)),
        }
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Key::Iso(k) => write!(f, "{k}"),
            Key::Aniso(kx, ky) => write!(f, "({kx},{ky})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FamilyKind {
    Orthonormal,
    LegendreTensor,
    AnisotropicLegendre,
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FamilyKind::Orthonormal => "orthonormal",
            FamilyKind::LegendreTensor => "Legendre tensor",
            FamilyKind::AnisotropicLegendre => "anisotropic Legendre",
        };
        f.write_str(name)
    }
}

/// Produces basis function sets per element and key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BasisFamily {
    kind: FamilyKind,
}

impl BasisFamily {
    pub fn new(kind: FamilyKind) -> Self {
        Self { kind }
    }

    pub fn orthonormal() -> Self {
        Self::new(FamilyKind::Orthonormal)
    }

    pub fn legendre() -> Self {
        Self::new(FamilyKind::LegendreTensor)
    }

    pub fn anisotropic() -> Self {
        Self::new(FamilyKind::AnisotropicLegendre)
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    /// Key of (uniform) degree `k` appropriate for this family.
    pub fn key_of_degree(&self, k: usize) -> Key {
        match self.kind {
            FamilyKind::AnisotropicLegendre => Key::Aniso(k, k),
            _ => Key::Iso(k),
        }
    }

    pub fn validate(&self, cell_type: CellType, key: Key) -> Result<()> {
        let invalid = || Error::InvalidKey {
            key,
            family: self.kind,
            cell_type,
        };
        let ok = match (self.kind, key) {
            (FamilyKind::Orthonormal, Key::Iso(k)) => k <= MAX_DEGREE,
            (FamilyKind::LegendreTensor, Key::Iso(k)) => cell_type == CellType::Quad && k <= MAX_DEGREE,
            (FamilyKind::AnisotropicLegendre, Key::Aniso(kx, ky)) => {
                cell_type == CellType::Quad && kx <= MAX_DEGREE && ky <= MAX_DEGREE
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid())
        }
    }

    /// Number of basis functions for `key` on `cell_type`.
    pub fn blocks(&self, cell_type: CellType, key: Key) -> Result<usize> {
        self.validate(cell_type, key)?;
        Ok(match key {
            Key::Iso(k) if self.kind == FamilyKind::Orthonormal => total_degree_dim(k),
            Key::Iso(k) => (k + 1) * (k + 1),
            Key::Aniso(kx, ky) => (kx + 1) * (ky + 1),
        })
    }

    pub fn basis_function_set(&self, element: &Element, key: Key) -> Result<BasisFunctionSet> {
        let size = self.blocks(element.cell_type(), key)?;
        Ok(BasisFunctionSet {
            element: element.id(),
            cell_type: element.cell_type(),
            map: *element.map(),
            kind: self.kind,
            key,
            size,
        })
    }
}

/// Evaluable local basis of one element.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisFunctionSet {
    element: ElementId,
    cell_type: CellType,
    map: AffineMap,
    kind: FamilyKind,
    key: Key,
    size: usize,
}

impl BasisFunctionSet {
    pub fn element(&self) -> ElementId {
        self.element
    }

    pub fn cell_type(&self) -> CellType {
        self.cell_type
    }

    pub fn map(&self) -> &AffineMap {
        &self.map
    }

    pub fn family(&self) -> FamilyKind {
        self.kind
    }

    pub fn key(&self) -> Key {
        self.key
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Values, reference gradients and reference Hessians of all functions.
    pub fn jets_into(&self, xi: Point, out: &mut Vec<Jet>) {
        out.resize(self.size, Jet::ZERO);
        reference_jets(self.kind, self.cell_type, self.key, xi, out);
    }

    pub fn evaluate(&self, xi: Point) -> Vec<f64> {
        let mut jets = Vec::new();
        self.jets_into(xi, &mut jets);
        jets.iter().map(Jet::value).collect()
    }

    /// Gradients with respect to reference coordinates.
    pub fn gradients(&self, xi: Point) -> Vec<Point> {
        let mut jets = Vec::new();
        self.jets_into(xi, &mut jets);
        jets.iter().map(Jet::gradient).collect()
    }

    /// Gradients with respect to physical coordinates, `DF⁻ᵀ ∇̂φ`.
    pub fn physical_gradients(&self, xi: Point) -> Vec<Point> {
        self.gradients(xi)
            .into_iter()
            .map(|g| self.map.push_gradient(g))
            .collect()
    }

    /// Evaluates `Σ c_i φ_i` at a reference point.
    pub fn combine(&self, coefficients: &[f64], xi: Point) -> f64 {
        debug_assert_eq!(coefficients.len(), self.size);
        self.evaluate(xi).iter().zip(coefficients).map(|(v, c)| v * c).sum()
    }

    /// Shared tabulation of the reference functions at the points of `rule`.
    pub fn tabulate(&self, rule: &'static QuadratureRule) -> Arc<Tabulation> {
        tabulation(self.kind, self.cell_type, self.key, rule)
    }
}

pub(crate) fn reference_jets(kind: FamilyKind, cell_type: CellType, key: Key, xi: Point, out: &mut [Jet]) {
    match (kind, key) {
        (FamilyKind::Orthonormal, Key::Iso(k)) => {
            let mut aux = Vec::with_capacity(total_degree_dim(k));
            orthonormal::table(cell_type).evaluate(xi, k, &mut aux, out);
        }
        (_, key) => {
            let (kx, ky) = match key {
                Key::Iso(k) => (k, k),
                Key::Aniso(kx, ky) => (kx, ky),
            };
            let mut px = [[0.0; 3]; MAX_DEGREE + 1];
            let mut py = [[0.0; 3]; MAX_DEGREE + 1];
            shifted_legendre(xi[0], &mut px[..=kx]);
            shifted_legendre(xi[1], &mut py[..=ky]);
            for b in 0..=ky {
                for a in 0..=kx {
                    out[a + (kx + 1) * b] = Jet::tensor(px[a], py[b]);
                }
            }
        }
    }
}

/// Reference values and gradients of a basis at the points of a rule.
#[derive(Debug)]
pub struct Tabulation {
    size: usize,
    jets: Vec<Jet>,
}

impl Tabulation {
    pub fn size(&self) -> usize {
        self.size
    }

    /// All functions at quadrature point `q`.
    pub fn at(&self, q: usize) -> &[Jet] {
        &self.jets[q * self.size..(q + 1) * self.size]
    }
}

type TabulationKey = (FamilyKind, CellType, Key, usize, usize);

fn tabulation(kind: FamilyKind, cell_type: CellType, key: Key, rule: &'static QuadratureRule) -> Arc<Tabulation> {
    static CACHE: OnceLock<Mutex<HashMap<TabulationKey, Arc<Tabulation>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    // Rules are 'static, so their address identifies them.
    let id = (kind, cell_type, key, rule.order(), rule as *const _ as usize);
    if let Some(t) = cache.lock().expect("tabulation cache").get(&id) {
        return Arc::clone(t);
    }
    let size = BasisFamily::new(kind)
        .blocks(cell_type, key)
        .expect("tabulated keys are validated");
    let mut jets = vec![Jet::ZERO; size * rule.len()];
    for (q, xi) in rule.points().iter().enumerate() {
        reference_jets(kind, cell_type, key, *xi, &mut jets[q * size..(q + 1) * size]);
    }
    let t = Arc::new(Tabulation { size, jets });
    cache.lock().expect("tabulation cache").entry(id).or_insert(t).clone()
}
