use hpdg_core::adapt::transfer_degrees;
use hpdg_core::mesh::{AdaptationMarks, Mark};
use hpdg_core::sipg::{assemble, ProblemData};
use hpdg_core::space::DegreeMap;
use hpdg_core::{BasisFamily, CellType, DiscreteFunctionSpace, HierarchicalMesh, Key, MacroGrid};
use proptest::prelude::*;

fn grid(triangles: bool) -> MacroGrid {
    if triangles {
        MacroGrid::l_shape_triangles(1).unwrap()
    } else {
        MacroGrid::l_shape(2).unwrap()
    }
}

/// Applies one round of marks derived from `choices` (refine below 0.3,
/// coarsen above 0.6) to the current leaves.
fn apply(mesh: &mut HierarchicalMesh, choices: &[f64]) -> hpdg_core::mesh::AdaptationReport {
    let mut marks = AdaptationMarks::new();
    for (i, &id) in mesh.leaves().iter().enumerate() {
        let c = choices[i % choices.len()];
        if c < 0.3 && id.level() < 3 {
            marks.set(id, Mark::Refine);
        } else if c > 0.6 && mesh.can_coarsen(id) {
            marks.set(id, Mark::Coarsen);
        }
    }
    mesh.adapt(&marks).unwrap()
}

fn reference_point(cell: CellType, a: f64, b: f64) -> [f64; 2] {
    match cell {
        CellType::Quad => [a, b],
        CellType::Triangle if a + b > 1.0 => [1.0 - a, 1.0 - b],
        CellType::Triangle => [a, b],
    }
}

fn same_segment(s: [[f64; 2]; 2], t: [[f64; 2]; 2]) -> bool {
    let close = |p: [f64; 2], q: [f64; 2]| (p[0] - q[0]).abs() < 1e-14 && (p[1] - q[1]).abs() < 1e-14;
    (close(s[0], t[0]) && close(s[1], t[1])) || (close(s[0], t[1]) && close(s[1], t[0]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adaptation_conserves_area_and_pairs_facets(
        triangles in any::<bool>(),
        rounds in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 1..12), 1..5),
    ) {
        let mut mesh = HierarchicalMesh::new(grid(triangles));
        let area = mesh.macro_grid().area();
        for choices in &rounds {
            apply(&mut mesh, choices);
            let sum: f64 = mesh.leaf_elements().map(|e| e.area()).sum();
            prop_assert!((sum - area).abs() <= 1e-12);
            for &id in mesh.leaves() {
                for f in mesh.intersections(id) {
                    let Some(out) = f.outside() else { continue };
                    let twin = mesh
                        .intersections(out)
                        .iter()
                        .find(|g| g.outside() == Some(id) && same_segment(g.segment(), f.segment()));
                    prop_assert!(twin.is_some(), "{id} -> {out} has no reverse");
                    let (n, m) = (f.normal(), twin.unwrap().normal());
                    prop_assert!((n[0] + m[0]).abs() <= 1e-14 && (n[1] + m[1]).abs() <= 1e-14);
                }
            }
        }
    }

    #[test]
    fn children_lie_inside_their_father(
        triangles in any::<bool>(),
        choices in prop::collection::vec(0.0..1.0f64, 1..8),
        points in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 100),
    ) {
        let mut mesh = HierarchicalMesh::new(grid(triangles));
        let report = apply(&mut mesh, &choices);
        for (father, children) in &report.refined {
            let father = mesh.element(*father).unwrap();
            for &child in children {
                let child = mesh.leaf(child).unwrap();
                for &(a, b) in &points {
                    let x = child.map().map(reference_point(child.cell_type(), a, b));
                    prop_assert!(father.contains(x, 1e-12));
                }
            }
        }
    }

    #[test]
    fn refine_then_coarsen_restores_the_leaf_order(
        triangles in any::<bool>(),
        setup in prop::collection::vec(0.0..1.0f64, 1..8),
        pick in any::<prop::sample::Index>(),
    ) {
        let mut mesh = HierarchicalMesh::new(grid(triangles));
        apply(&mut mesh, &setup);
        let before = mesh.leaves().to_vec();
        let id = before[pick.index(before.len())];
        mesh.refine(&[id]).unwrap();
        let mut marks = AdaptationMarks::new();
        for child in id.children().unwrap() {
            marks.set(child, Mark::Coarsen);
        }
        mesh.adapt(&marks).unwrap();
        prop_assert_eq!(mesh.leaves(), &before[..]);
    }

    #[test]
    fn degree_transfer_stays_within_old_bounds(
        triangles in any::<bool>(),
        setup in prop::collection::vec(0.0..1.0f64, 1..8),
        choices in prop::collection::vec(0.0..1.0f64, 1..8),
        degrees in prop::collection::vec(1usize..9, 1..16),
    ) {
        let mut mesh = HierarchicalMesh::new(grid(triangles));
        apply(&mut mesh, &setup);
        let mut keys = DegreeMap::new();
        for (i, &id) in mesh.leaves().iter().enumerate() {
            keys.set(id, Key::Iso(degrees[i % degrees.len()]));
        }
        let (lo, hi) = keys.iter().fold((usize::MAX, 0), |(lo, hi), (_, k)| (lo.min(k.degree()), hi.max(k.degree())));
        let report = apply(&mut mesh, &choices);
        let out = transfer_degrees(&report, &keys).unwrap();
        prop_assert_eq!(out.len(), mesh.num_leaves());
        for &id in mesh.leaves() {
            let k = out.get(id).unwrap().degree();
            prop_assert!(lo <= k && k <= hi);
        }
    }

    #[test]
    fn constants_are_represented_and_blocks_match(
        family in 0usize..3,
        k in 0usize..7,
        setup in prop::collection::vec(0.0..1.0f64, 1..6),
        points in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 10),
    ) {
        let family = [BasisFamily::orthonormal(), BasisFamily::legendre(), BasisFamily::anisotropic()][family];
        let triangles = family.kind() == hpdg_core::FamilyKind::Orthonormal && k % 2 == 1;
        let key = family.key_of_degree(k);
        let mut mesh = HierarchicalMesh::new(grid(triangles));
        apply(&mut mesh, &setup);
        let cell = mesh.cell_type();
        let space = DiscreteFunctionSpace::new(mesh, family, key).unwrap();
        let one = space.interpolate(|_| 1.0).unwrap();
        for e in space.mesh().leaf_elements() {
            prop_assert_eq!(family.blocks(cell, key).unwrap(), family.basis_function_set(e, key).unwrap().size());
            for &(a, b) in &points {
                let v = space.evaluate(&one, e.id(), reference_point(cell, a, b)).unwrap();
                prop_assert!((v - 1.0).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn penalized_form_is_positive_and_solves_to_tolerance(
        triangles in any::<bool>(),
        k in 1usize..5,
        setup in prop::collection::vec(0.0..1.0f64, 1..6),
        seed in prop::collection::vec(-1.0..1.0f64, 1..32),
    ) {
        let mut mesh = HierarchicalMesh::new(grid(triangles));
        apply(&mut mesh, &setup);
        let space = DiscreteFunctionSpace::new(mesh, BasisFamily::orthonormal(), Key::Iso(k)).unwrap();
        let data = ProblemData::new(|x| x[0] * x[1], |x| x[0] - x[1], 10.0).unwrap();
        let sys = assemble(&space, &data).unwrap();
        let n = sys.rhs.len();
        for shift in 0..20 {
            let y: Vec<f64> = (0..n).map(|i| seed[(i + shift) % seed.len()] + 1e-3 * (i % 7) as f64).collect();
            prop_assert!(sys.matrix.quadratic_form(&y) > 0.0);
        }
        let tol = 1e-10;
        let x = sys.solve(None, tol, 20_000).unwrap().x;
        let mut ax = vec![0.0; n];
        sys.matrix.mul_vec(&x, &mut ax);
        let b_norm = sys.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let r_max = sys.rhs.iter().zip(&ax).map(|(b, a)| (b - a).abs()).fold(0.0, f64::max);
        prop_assert!(r_max <= 10.0 * tol * b_norm, "{r_max:e}");
    }
}
