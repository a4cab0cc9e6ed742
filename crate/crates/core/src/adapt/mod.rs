//! A posteriori estimation, hp decisions and the two-stage adaptation cycle.
//!
//! One cycle first adapts the grid with the data restricted and prolonged
//! under the old keys, then applies the new keys on the adapted grid.

mod estimator;
mod marking;

pub use estimator::{estimate, ElementIndicator, Estimate};
pub use marking::{
    decay_index, mark_hp, prefers_p, regularity_index, Action, HpDecision, HpMarking, MarkingParameters,
    COEFFICIENT_FLOOR, DEFAULT_REGULARITY_MARGIN, MIN_REGULARITY_DEGREE, RESOLVED_INDEX,
};

use crate::error::{Error, Result};
use crate::mesh::AdaptationReport;
use crate::space::{DegreeMap, DiscreteFunction, DiscreteFunctionSpace, L2Projection};

/// Keys on the leaf set after `report`: refined children inherit the
/// father's key, a coarsened father takes the (componentwise) maximum of
/// its former children.
pub fn transfer_degrees(report: &AdaptationReport, degrees: &DegreeMap) -> Result<DegreeMap> {
    let mut out: DegreeMap = degrees.iter().collect();
    for (father, children) in &report.refined {
        let key = degrees.get(*father).ok_or(Error::MissingDegree(*father))?;
        out.remove(*father);
        for &child in children {
            out.set(child, key);
        }
    }
    for (father, children) in &report.coarsened {
        let mut key = None;
        for child in children {
            let k = degrees.get(child.id()).ok_or(Error::MissingDegree(child.id()))?;
            key = Some(key.map_or(k, |m: crate::basis::Key| m.max(k)));
            out.remove(child.id());
        }
        out.set(*father, key.ok_or(Error::MissingDegree(*father))?);
    }
    Ok(out)
}

/// Applies `marking` to `space` and carries `uh` along both stages.
/// Returns whether either stage changed the space.
pub fn hp_adapt_cycle(
    space: &mut DiscreteFunctionSpace,
    uh: &mut DiscreteFunction,
    marking: &HpMarking,
) -> Result<bool> {
    for &(id, key) in &marking.keys {
        space.mark(id, key)?;
    }
    let report = space.adapt_h(&marking.marks, &transfer_degrees, &mut [&mut L2Projection::new(uh)])?;
    let p_changed = space.adapt_p(&mut [&mut L2Projection::new(uh)])?;
    Ok(!report.is_empty() || p_changed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{total_degree_dim, BasisFamily, Key};
    use crate::mesh::{AdaptationMarks, ElementId, HierarchicalMesh, MacroGrid, Mark};
    use crate::sipg::ProblemData;

    fn space(grid: MacroGrid, k: usize) -> DiscreteFunctionSpace {
        DiscreteFunctionSpace::new(HierarchicalMesh::new(grid), BasisFamily::orthonormal(), Key::Iso(k)).unwrap()
    }

    fn estimate_with(etas: &[(ElementId, f64)]) -> Estimate {
        Estimate {
            indicators: etas
                .iter()
                .map(|&(element, eta)| ElementIndicator {
                    element,
                    volume: eta * eta,
                    gradient_jump: 0.0,
                    value_jump: 0.0,
                    boundary: 0.0,
                })
                .collect(),
        }
    }

    fn quadratic_data(gamma: f64) -> ProblemData {
        let u = |x: [f64; 2]| x[0] * x[0] + 0.5 * x[0] * x[1] - x[1];
        ProblemData::new(|_| -2.0, u, gamma).unwrap()
    }

    #[test]
    fn conforming_polynomial_has_zero_estimate() {
        for grid in [MacroGrid::l_shape(1).unwrap(), MacroGrid::l_shape_triangles(1).unwrap()] {
            let mut s = space(grid, 2);
            let first = s.mesh().leaves()[0];
            s.adapt_h(
                &{
                    let mut m = AdaptationMarks::new();
                    m.set(first, Mark::Refine);
                    m
                },
                &transfer_degrees,
                &mut [],
            )
            .unwrap();
            let data = quadratic_data(10.0);
            let uh = s.interpolate(|x| data.g(x)).unwrap();
            let est = estimate(&s, &uh, &data).unwrap();
            assert_eq!(est.len(), s.mesh().num_leaves());
            assert!(est.global() < 1e-10, "{}", est.global());
        }
    }

    #[test]
    fn estimate_ignores_penalty_and_sees_each_term() {
        let s = space(MacroGrid::unit_square(2).unwrap(), 3);
        let uh = s.interpolate(|x| (3.0 * x[0]).sin() * x[1]).unwrap();
        let a = estimate(&s, &uh, &quadratic_data(10.0)).unwrap();
        let b = estimate(&s, &uh, &quadratic_data(20.0)).unwrap();
        assert_eq!(a, b);
        let sum = |f: fn(&ElementIndicator) -> f64| a.indicators.iter().map(f).sum::<f64>();
        assert!(sum(|i| i.volume) > 0.0);
        assert!(sum(|i| i.gradient_jump) > 0.0);
        assert!(sum(|i| i.value_jump) > 0.0);
        assert!(sum(|i| i.boundary) > 0.0);
        let total: f64 = a.indicators.iter().map(|i| i.eta_squared()).sum();
        assert!((a.global() - total.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn estimate_requires_positive_degree() {
        let s = space(MacroGrid::unit_square(1).unwrap(), 0);
        let uh = s.zero_function();
        assert!(matches!(
            estimate(&s, &uh, &quadratic_data(1.0)),
            Err(Error::DegreeTooLow { .. })
        ));
    }

    #[test]
    fn decay_index_examples() {
        assert_eq!(decay_index(0.3, 0.3, 4), 1.0);
        assert_eq!(decay_index(0.3, 0.0, 4), RESOLVED_INDEX);
        assert_eq!(decay_index(1.0, 1e-300, 4), RESOLVED_INDEX);
        assert_eq!(decay_index(1e-3, 1.0, 4), 1.0);
        // b_{k−1}/b_k = (k/(k−1))^{q−1}
        let k = 5;
        let ratio = (5.0f64 / 4.0).powi(3);
        assert!((decay_index(ratio, 1.0, k) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn regularity_of_low_degree_polynomial_is_resolved() {
        let s = space(MacroGrid::unit_square(1).unwrap(), 4);
        let uh = s.interpolate(|x| x[0] * x[0] * x[1] - 2.0 * x[1]).unwrap();
        let id = s.mesh().leaves()[0];
        assert_eq!(regularity_index(&s, &uh, id).unwrap(), RESOLVED_INDEX);
        let low = space(MacroGrid::unit_square(1).unwrap(), 2);
        assert!(matches!(
            regularity_index(&low, &low.zero_function(), id),
            Err(Error::DegreeTooLow { minimum: 3, .. })
        ));
    }

    #[test]
    fn regularity_for_tensor_families_uses_orthonormal_expansion() {
        let mesh = HierarchicalMesh::new(MacroGrid::unit_square(1).unwrap());
        let s = DiscreteFunctionSpace::new(mesh, BasisFamily::legendre(), Key::Iso(3)).unwrap();
        let uh = s.interpolate(|x| x[0] * x[1] + 1.0).unwrap();
        let id = s.mesh().leaves()[0];
        assert_eq!(regularity_index(&s, &uh, id).unwrap(), RESOLVED_INDEX);
    }

    fn reentrant(x: [f64; 2]) -> f64 {
        let r = x[0].hypot(x[1]);
        let mut phi = x[1].atan2(x[0]);
        if phi < 0.0 {
            phi += 2.0 * std::f64::consts::PI;
        }
        r.powf(2.0 / 3.0) * (2.0 * phi / 3.0).sin()
    }

    #[test]
    fn regularity_separates_smooth_from_singular() {
        for grid in [MacroGrid::l_shape(2).unwrap(), MacroGrid::l_shape_triangles(2).unwrap()] {
            for k in 3..=8 {
                let s = space(grid.clone(), k);
                let smooth = s.interpolate(|x| (x[0] + x[1]).exp()).unwrap();
                let leaves = s.mesh().leaves();
                let raised = leaves
                    .iter()
                    .filter(|&&id| {
                        let q = regularity_index(&s, &smooth, id).unwrap();
                        prefers_p(q, k, DEFAULT_REGULARITY_MARGIN)
                    })
                    .count();
                assert!(10 * raised >= 9 * leaves.len(), "k={k}: {raised}/{}", leaves.len());

                let singular = s.interpolate(reentrant).unwrap();
                for e in s.mesh().leaf_elements() {
                    if e.vertices().iter().any(|v| v[0] == 0.0 && v[1] == 0.0) {
                        let q = regularity_index(&s, &singular, e.id()).unwrap();
                        assert!(!prefers_p(q, k, DEFAULT_REGULARITY_MARGIN), "k={k}: corner q={q}");
                        assert!(q < 6.0, "k={k}: corner q={q}");
                    }
                }
            }
        }
    }

    /// Function on a single orthonormal element whose top slices give `q`.
    fn with_regularity(s: &DiscreteFunctionSpace, q: f64) -> DiscreteFunction {
        let k = s.key(s.mesh().leaves()[0]).unwrap().degree();
        let mut u = s.zero_function();
        let kf = k as f64;
        u.values_mut()[total_degree_dim(k - 2)] = (kf / (kf - 1.0)).powf(q - 1.0);
        u.values_mut()[total_degree_dim(k - 1)] = 1.0;
        u
    }

    #[test]
    fn marking_follows_thresholds_and_regularity() {
        let s = space(MacroGrid::unit_square(1).unwrap(), 4);
        let id = s.mesh().leaves()[0];
        let mut params = MarkingParameters::new(1.0, 3, 8);
        assert_eq!(params.thresholds(4), (0.25, 0.5));
        params.eta_lower = Some(0.25);
        params.eta_upper = Some(1.0);
        params.regularity_margin = 0.0;

        // inside [η_*, η^*]: nothing to do
        let u = with_regularity(&s, 6.0);
        let m = mark_hp(&s, &u, &estimate_with(&[(id, 0.5)]), &params).unwrap();
        assert!(m.is_empty());
        assert_eq!(m.decisions[0].action, Action::None);

        // q = k + 2 raises the degree, unless the margin asks for more
        let strict = MarkingParameters {
            regularity_margin: 1.5,
            ..params
        };
        let m = mark_hp(&s, &u, &estimate_with(&[(id, 2.0)]), &strict).unwrap();
        assert_eq!(m.marks.get(id), Mark::Refine);
        let m = mark_hp(&s, &u, &estimate_with(&[(id, 2.0)]), &params).unwrap();
        assert_eq!(m.keys, vec![(id, Key::Iso(5))]);
        assert!(m.marks.is_empty());
        assert!((m.decisions[0].regularity.unwrap() - 6.0).abs() < 1e-9);

        // q = k refines
        let u = with_regularity(&s, 4.0);
        let m = mark_hp(&s, &u, &estimate_with(&[(id, 2.0)]), &params).unwrap();
        assert!(m.keys.is_empty());
        assert_eq!(m.marks.get(id), Mark::Refine);

        // a smooth leaf at k_max is refined instead, lowering stops at k_min
        let capped = MarkingParameters {
            k_min: 4,
            k_max: 4,
            ..params
        };
        let m = mark_hp(&s, &with_regularity(&s, 6.0), &estimate_with(&[(id, 2.0)]), &capped).unwrap();
        assert!(m.keys.is_empty());
        assert_eq!(m.marks.get(id), Mark::Refine);
        let m = mark_hp(&s, &u, &estimate_with(&[(id, 0.1)]), &params).unwrap();
        assert_eq!(m.keys, vec![(id, Key::Iso(3))]);
        assert_eq!(m.count(Action::PLower), 1);

        assert!(matches!(
            mark_hp(&s, &u, &estimate_with(&[(id, 2.0)]), &MarkingParameters::new(0.0, 3, 8)),
            Err(Error::NonPositiveTolerance(_))
        ));
        assert!(matches!(
            mark_hp(&s, &u, &estimate_with(&[(id, 2.0)]), &MarkingParameters::new(1.0, 5, 4)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn low_degrees_raise_without_a_regularity_estimate() {
        let s = space(MacroGrid::unit_square(1).unwrap(), 2);
        let id = s.mesh().leaves()[0];
        let u = s.interpolate(|x| (x[0] * x[1]).sqrt()).unwrap();
        let mut params = MarkingParameters::new(1.0, 1, 2);
        params.eta_upper = Some(1.0);
        let m = mark_hp(&s, &u, &estimate_with(&[(id, 2.0)]), &params).unwrap();
        assert_eq!(m.marks.get(id), Mark::Refine);
        params.k_max = 3;
        let m = mark_hp(&s, &u, &estimate_with(&[(id, 2.0)]), &params).unwrap();
        assert_eq!(m.keys, vec![(id, Key::Iso(3))]);
        assert_eq!(m.decisions[0].regularity, None);
    }

    #[test]
    fn coarsening_needs_the_whole_sibling_set() {
        let mut s = space(MacroGrid::unit_square(1).unwrap(), 3);
        let root = s.mesh().leaves()[0];
        let mut marks = AdaptationMarks::new();
        marks.set(root, Mark::Refine);
        s.adapt_h(&marks, &transfer_degrees, &mut []).unwrap();
        let kids = root.children().unwrap();
        let u = s.zero_function();
        let mut params = MarkingParameters::new(1.0, 3, 8);
        params.eta_lower = Some(0.1);
        params.eta_upper = Some(10.0);

        let all: Vec<_> = kids.iter().map(|&c| (c, 0.01)).collect();
        let m = mark_hp(&s, &u, &estimate_with(&all), &params).unwrap();
        assert_eq!(m.count(Action::HCoarsen), 4);

        let mut three = all.clone();
        three[2].1 = 1.0;
        s.mark(kids[0], Key::Iso(5)).unwrap();
        s.adapt_p(&mut []).unwrap();
        let m = mark_hp(&s, &u, &estimate_with(&three), &params).unwrap();
        assert_eq!(m.count(Action::HCoarsen), 0);
        // the three quiet siblings try to lower; only kids[0] is above k_min
        assert_eq!(m.keys, vec![(kids[0], Key::Iso(4))]);
    }

    fn refined_square(keys: [Key; 4], family: BasisFamily) -> (DiscreteFunctionSpace, ElementId) {
        let mesh = HierarchicalMesh::new(MacroGrid::unit_square(1).unwrap());
        let root = mesh.leaves()[0];
        let mut s = DiscreteFunctionSpace::new(mesh, family, keys[0]).unwrap();
        let mut marks = AdaptationMarks::new();
        marks.set(root, Mark::Refine);
        s.adapt_h(&marks, &transfer_degrees, &mut []).unwrap();
        for (c, k) in root.children().unwrap().into_iter().zip(keys) {
            s.mark(c, k).unwrap();
        }
        s.adapt_p(&mut []).unwrap();
        (s, root)
    }

    fn coarsen(s: &mut DiscreteFunctionSpace, root: ElementId) {
        let mut marks = AdaptationMarks::new();
        for c in root.children().unwrap() {
            marks.set(c, Mark::Coarsen);
        }
        s.adapt_h(&marks, &transfer_degrees, &mut []).unwrap();
    }

    #[test]
    fn degree_transfer_examples() {
        let iso = |k| Key::Iso(k);
        let (mut s, root) = refined_square([iso(3), iso(4), iso(4), iso(5)], BasisFamily::orthonormal());
        coarsen(&mut s, root);
        assert_eq!(s.key(root).unwrap(), iso(5));

        let mut s = space(MacroGrid::unit_square(1).unwrap(), 4);
        let mut marks = AdaptationMarks::new();
        marks.set(root, Mark::Refine);
        s.adapt_h(&marks, &transfer_degrees, &mut []).unwrap();
        for c in root.children().unwrap() {
            assert_eq!(s.key(c).unwrap(), iso(4));
        }

        let a = Key::Aniso;
        let (mut s, root) = refined_square([a(2, 3), a(3, 2), a(2, 2), a(2, 2)], BasisFamily::anisotropic());
        coarsen(&mut s, root);
        assert_eq!(s.key(root).unwrap(), a(3, 3));
    }

    #[test]
    fn transfer_reports_missing_degrees() {
        let mut mesh = HierarchicalMesh::new(MacroGrid::unit_square(1).unwrap());
        let root = mesh.leaves()[0];
        let report = mesh.refine(&[root]).unwrap();
        assert!(matches!(
            transfer_degrees(&report, &DegreeMap::new()),
            Err(Error::MissingDegree(id)) if id == root
        ));
    }

    #[test]
    fn cycle_without_marks_changes_nothing() {
        let mut s = space(MacroGrid::l_shape(1).unwrap(), 3);
        let mut u = s.interpolate(|x| x[0] - x[1]).unwrap();
        let before = u.clone();
        assert!(!hp_adapt_cycle(&mut s, &mut u, &HpMarking::default()).unwrap());
        assert_eq!(u, before);
    }

    #[test]
    fn cycle_raising_everywhere_embeds_exactly() {
        use rand::{Rng, SeedableRng};
        let mut s = space(MacroGrid::l_shape_triangles(1).unwrap(), 3);
        let mut u = s.interpolate(|x| (2.0 * x[0]).sin() + x[1].cos()).unwrap();
        let old = s.clone();
        let old_u = u.clone();
        let marking = HpMarking {
            keys: s.mesh().leaves().iter().map(|&id| (id, Key::Iso(4))).collect(),
            ..Default::default()
        };
        assert!(hp_adapt_cycle(&mut s, &mut u, &marking).unwrap());
        assert_eq!(s.size(), s.mesh().num_leaves() * 15);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let id = s.mesh().leaves()[rng.random_range(0..s.mesh().num_leaves())];
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            let xi = [a * (1.0 - b), b * (1.0 - 0.0)];
            let xi = if xi[0] + xi[1] > 1.0 {
                [1.0 - xi[0], 1.0 - xi[1]]
            } else {
                xi
            };
            let d = s.evaluate(&u, id, xi).unwrap() - old.evaluate(&old_u, id, xi).unwrap();
            assert!(d.abs() < 1e-11);
        }
    }

    #[test]
    fn refining_one_cubic_element_adds_thirty_dofs() {
        let mut s = space(MacroGrid::l_shape(1).unwrap(), 3);
        let mut u = s.interpolate(|x| x[0] * x[1]).unwrap();
        let n = s.size();
        let mut marking = HpMarking::default();
        marking.marks.set(s.mesh().leaves()[1], Mark::Refine);
        assert!(hp_adapt_cycle(&mut s, &mut u, &marking).unwrap());
        assert_eq!(s.size(), n + 30);
        assert_eq!(u.len(), s.size());
    }
}
