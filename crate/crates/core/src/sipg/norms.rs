//! `L²` and DG energy norms of discrete functions and of discretization errors.

use super::{dot2, facet_points, owns, penalty, LocalBasis, ProblemData};
use crate::error::{Error, Result};
use crate::mesh::{AffineMap, CellType, Element};
use crate::quadrature::{default_order, element_rule, MAX_ORDER};
use crate::space::{DiscreteFunction, DiscreteFunctionSpace};

/// Quadrature settings for integrating against a non-polynomial exact solution.
pub struct ErrorIntegration {
    /// Volume and boundary rules have order `2 k + extra_order`.
    pub extra_order: usize,
    /// Number of uniform virtual subdivisions per element.
    pub subdivisions: Box<dyn Fn(&Element) -> u32 + Send + Sync>,
}

impl Default for ErrorIntegration {
    fn default() -> Self {
        Self {
            extra_order: 2,
            subdivisions: Box::new(|_| 0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorNorms {
    pub l2: f64,
    pub dg: f64,
}

/// Reference-to-reference maps of the cells of `levels` uniform subdivisions.
fn subcells(cell: CellType, levels: u32) -> Vec<AffineMap> {
    let mut maps = vec![AffineMap::for_cell(cell, &reference_vertices(cell))];
    for _ in 0..levels {
        let mut next = Vec::with_capacity(4 * maps.len());
        for m in &maps {
            for child in child_vertices(cell) {
                let v: Vec<_> = child.iter().map(|&p| m.map(p)).collect();
                next.push(AffineMap::for_cell(cell, &v));
            }
        }
        maps = next;
    }
    maps
}

fn reference_vertices(cell: CellType) -> Vec<[f64; 2]> {
    match cell {
        CellType::Quad => vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        CellType::Triangle => vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
    }
}

fn child_vertices(cell: CellType) -> Vec<Vec<[f64; 2]>> {
    match cell {
        CellType::Quad => (0..4)
            .map(|c| {
                let (x, y) = (0.5 * (c % 2) as f64, 0.5 * (c / 2) as f64);
                vec![[x, y], [x + 0.5, y], [x + 0.5, y + 0.5], [x, y + 0.5]]
            })
            .collect(),
        CellType::Triangle => vec![
            vec![[0.0, 0.0], [0.5, 0.0], [0.0, 0.5]],
            vec![[0.5, 0.0], [1.0, 0.0], [0.5, 0.5]],
            vec![[0.0, 0.5], [0.5, 0.5], [0.0, 1.0]],
            vec![[0.5, 0.5], [0.0, 0.5], [0.5, 0.0]],
        ],
    }
}

pub fn l2_norm(space: &DiscreteFunctionSpace, u: &DiscreteFunction) -> Result<f64> {
    let mut sum = 0.0;
    for &id in space.mesh().leaves() {
        let set = space.basis_set(id)?;
        let c = space.local_dofs(u, id)?;
        let k = set.key().degree();
        let rule = element_rule(set.cell_type(), default_order(k, k))?;
        let tab = set.tabulate(rule);
        let det = set.map().det().abs();
        for (q, w) in rule.weights().iter().enumerate() {
            let v: f64 = tab.at(q).iter().zip(&c).map(|(j, ci)| ci * j.value()).sum();
            sum += w * det * v * v;
        }
    }
    Ok(sum.sqrt())
}

/// `‖v‖²_DG = Σ_E ∫|∇v|² + Σ_int ∫ σ_e ⟦v⟧² + Σ_bnd ∫ σ_e v²`
pub fn dg_norm(space: &DiscreteFunctionSpace, v: &DiscreteFunction, gamma: f64) -> Result<f64> {
    let mut sum = 0.0;
    for &id in space.mesh().leaves() {
        let mut local = LocalBasis::new(space, id)?;
        let c = local.gather(v);
        let k = local.degree;
        let rule = element_rule(local.set.cell_type(), default_order(k, k))?;
        let map = *local.set.map();
        for (xi, w) in rule.iter() {
            local.eval(map.map(xi));
            let (_, g) = local.combine(&c);
            sum += w * map.det().abs() * dot2(g, g);
        }
        sum += facet_terms(space, v, gamma, &mut local, &c, &|_| 0.0, 0)?;
    }
    Ok(sum.sqrt())
}

/// Penalized facet terms of one element: jumps of `v` on owned interior
/// facets and `(v - g)` on boundary facets.
fn facet_terms(
    space: &DiscreteFunctionSpace,
    v: &DiscreteFunction,
    gamma: f64,
    inside: &mut LocalBasis,
    c: &[f64],
    g: &dyn Fn([f64; 2]) -> f64,
    extra_order: usize,
) -> Result<f64> {
    let mesh = space.mesh();
    let k = inside.degree;
    let mut sum = 0.0;
    for facet in mesh.intersections(inside.set.element()) {
        if !owns(facet) {
            continue;
        }
        match facet.outside() {
            None => {
                let sigma = penalty(facet, k, None, gamma)?;
                let order = (2 * k + extra_order.max(2)).min(MAX_ORDER);
                for (x, w, _) in facet_points(facet, order)? {
                    inside.eval(x);
                    let d = inside.combine(c).0 - g(x);
                    sum += w * sigma * d * d;
                }
            }
            Some(o) => {
                let mut outside = LocalBasis::new(space, o)?;
                let co = outside.gather(v);
                let sigma = penalty(facet, k, Some(outside.degree), gamma)?;
                for (x, w, _) in facet_points(facet, default_order(k, outside.degree))? {
                    inside.eval(x);
                    outside.eval(x);
                    let d = inside.combine(c).0 - outside.combine(&co).0;
                    sum += w * sigma * d * d;
                }
            }
        }
    }
    Ok(sum)
}

/// `‖u - u_h‖_{L²}` and `‖u - u_h‖_DG` for the exact solution attached to
/// `data`. Interior jumps are those of `u_h`; boundary terms use `u_h - g`.
pub fn error_norms(
    space: &DiscreteFunctionSpace,
    uh: &DiscreteFunction,
    data: &ProblemData,
    integration: &ErrorIntegration,
) -> Result<ErrorNorms> {
    if !data.has_exact() {
        return Err(Error::Config("error norms need an exact solution".into()));
    }
    let mut l2 = 0.0;
    let mut dg = 0.0;
    for e in space.mesh().leaf_elements() {
        let mut local = LocalBasis::new(space, e.id())?;
        let c = local.gather(uh);
        let k = local.degree;
        let order = (2 * k + integration.extra_order).min(MAX_ORDER);
        let rule = element_rule(e.cell_type(), order)?;
        let map = *e.map();
        for sub in subcells(e.cell_type(), (integration.subdivisions)(e)) {
            let det = (map.det() * sub.det()).abs();
            for (xi, w) in rule.iter() {
                let x = map.map(sub.map(xi));
                local.eval(x);
                let (v, g) = local.combine(&c);
                let u = data.exact(x).expect("checked above");
                let gu = data.exact_gradient(x).expect("checked above");
                let d = [gu[0] - g[0], gu[1] - g[1]];
                l2 += w * det * (u - v) * (u - v);
                dg += w * det * dot2(d, d);
            }
        }
        dg += facet_terms(
            space,
            uh,
            data.gamma(),
            &mut local,
            &c,
            &|x| data.g(x),
            integration.extra_order,
        )?;
    }
    Ok(ErrorNorms {
        l2: l2.sqrt(),
        dg: dg.sqrt(),
    })
}
