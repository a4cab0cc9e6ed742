//! Hierarchical 2D meshes with quadtree-style refinement.
//!
//! Quads split into four congruent children, triangles into four by
//! edge-midpoint (red) refinement. Hanging nodes are allowed with arbitrary
//! level difference across a facet.

mod geometry;
mod id;
mod macro_grid;

pub use geometry::{signed_area, AffineMap, CellType, Point};
pub use id::{ElementId, MAX_LEVEL};
pub use macro_grid::MacroGrid;

use crate::error::{Error, Result};
use geometry::{distance, midpoint, sub};
use macro_grid::canonical_bits;
use std::collections::{BTreeMap, HashMap, HashSet};

/// A mesh cell with its affine reference map.
#[derive(Clone, Debug, PartialEq)]
pub struct Element {
    id: ElementId,
    cell_type: CellType,
    vertices: [Point; 4],
    map: AffineMap,
    diameter: f64,
}

impl Element {
    fn new(id: ElementId, cell_type: CellType, verts: &[Point]) -> Self {
        let mut vertices = [[0.0; 2]; 4];
        vertices[..verts.len()].copy_from_slice(verts);
        let mut diameter: f64 = 0.0;
        for i in 0..verts.len() {
            for j in i + 1..verts.len() {
                diameter = diameter.max(distance(verts[i], verts[j]));
            }
        }
        Self {
            id,
            cell_type,
            vertices,
            map: AffineMap::for_cell(cell_type, verts),
            diameter,
        }
    }

    pub fn id(&self) -> ElementId {
        self.id
    }

    pub fn level(&self) -> u8 {
        self.id.level()
    }

    pub fn cell_type(&self) -> CellType {
        self.cell_type
    }

    /// Counterclockwise vertices.
    pub fn vertices(&self) -> &[Point] {
        &self.vertices[..self.cell_type.num_vertices()]
    }

    pub fn map(&self) -> &AffineMap {
        &self.map
    }

    /// `h_E`: largest distance between two vertices.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn area(&self) -> f64 {
        self.map.det().abs() * self.cell_type.reference_measure()
    }

    pub fn centroid(&self) -> Point {
        let v = self.vertices();
        let n = v.len() as f64;
        let s = v.iter().fold([0.0, 0.0], |acc, p| [acc[0] + p[0], acc[1] + p[1]]);
        [s[0] / n, s[1] / n]
    }

    /// Whether a physical point lies in the closed element.
    pub fn contains(&self, x: Point, eps: f64) -> bool {
        self.cell_type.contains_reference(self.map.inverse_map(x), eps)
    }

    /// Counterclockwise edges `(start, end)`.
    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let v = self.vertices();
        (0..v.len()).map(move |i| (v[i], v[(i + 1) % v.len()]))
    }

    fn children(&self) -> Option<[Element; 4]> {
        let ids = self.id.children()?;
        let v = self.vertices();
        let kids = match self.cell_type {
            CellType::Quad => {
                let m01 = midpoint(v[0], v[1]);
                let m12 = midpoint(v[1], v[2]);
                let m23 = midpoint(v[2], v[3]);
                let m30 = midpoint(v[3], v[0]);
                let c = midpoint(m01, m23);
                // Child index = cx + 2 cy in reference coordinates.
                [
                    [v[0], m01, c, m30],
                    [m01, v[1], m12, c],
                    [m30, c, m23, v[3]],
                    [c, m12, v[2], m23],
                ]
                .map(|q| q.to_vec())
            }
            CellType::Triangle => {
                let m01 = midpoint(v[0], v[1]);
                let m12 = midpoint(v[1], v[2]);
                let m20 = midpoint(v[2], v[0]);
                [
                    vec![v[0], m01, m20],
                    vec![m01, v[1], m12],
                    vec![m20, m12, v[2]],
                    vec![m12, m20, m01],
                ]
            }
        };
        let mut i = 0;
        Some(kids.map(|verts| {
            let e = Element::new(ids[i], self.cell_type, &verts);
            i += 1;
            e
        }))
    }
}

/// One side of a facet, seen from `inside`.
#[derive(Clone, Debug, PartialEq)]
pub struct Intersection {
    inside: ElementId,
    outside: Option<ElementId>,
    segment: [Point; 2],
    normal: Point,
    length: f64,
}

impl Intersection {
    pub fn inside(&self) -> ElementId {
        self.inside
    }

    /// Neighbor across the facet; `None` on the domain boundary.
    pub fn outside(&self) -> Option<ElementId> {
        self.outside
    }

    pub fn is_boundary(&self) -> bool {
        self.outside.is_none()
    }

    /// Integration segment, oriented counterclockwise with respect to `inside`.
    pub fn segment(&self) -> [Point; 2] {
        self.segment
    }

    /// Unit outer normal of `inside`.
    pub fn normal(&self) -> Point {
        self.normal
    }

    /// `h_e`: length of the integration segment.
    pub fn length(&self) -> f64 {
        self.length
    }

    /// Point at parameter `t ∈ [0,1]` along the segment.
    pub fn point(&self, t: f64) -> Point {
        let [a, b] = self.segment;
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    fn new(inside: ElementId, outside: Option<ElementId>, a: Point, b: Point) -> Self {
        let d = sub(b, a);
        let length = d[0].hypot(d[1]);
        Self {
            inside,
            outside,
            segment: [a, b],
            normal: [d[1] / length, -d[0] / length],
            length,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mark {
    Refine,
    Coarsen,
    Keep,
}

/// Per-leaf adaptation marks; unmarked leaves are kept.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdaptationMarks {
    marks: BTreeMap<ElementId, Mark>,
}

impl AdaptationMarks {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, id: ElementId, mark: Mark) {
        self.marks.insert(id, mark);
    }

    pub fn get(&self, id: ElementId) -> Mark {
        self.marks.get(&id).copied().unwrap_or(Mark::Keep)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ElementId, Mark)> + '_ {
        self.marks.iter().map(|(&k, &v)| (k, v))
    }

    pub fn is_empty(&self) -> bool {
        self.marks.values().all(|&m| m == Mark::Keep)
    }
}

/// Parent/child relations produced by one [`HierarchicalMesh::adapt`] call.
#[derive(Clone, Debug, Default)]
pub struct AdaptationReport {
    /// Fathers that were refined, with their new leaf children.
    pub refined: Vec<(ElementId, [ElementId; 4])>,
    /// New leaves created by coarsening, with copies of the removed children.
    pub coarsened: Vec<(ElementId, Vec<Element>)>,
    /// Coarsen marks that were dropped because the sibling set was incomplete.
    pub demoted: Vec<ElementId>,
}

impl AdaptationReport {
    pub fn is_empty(&self) -> bool {
        self.refined.is_empty() && self.coarsened.is_empty()
    }

    /// Father of every leaf created by refinement.
    pub fn new_leaf_fathers(&self) -> BTreeMap<ElementId, ElementId> {
        self.refined
            .iter()
            .flat_map(|(f, kids)| kids.iter().map(move |&k| (k, *f)))
            .collect()
    }

    /// Former children of every leaf created by coarsening.
    pub fn new_father_children(&self) -> BTreeMap<ElementId, Vec<ElementId>> {
        self.coarsened
            .iter()
            .map(|(f, kids)| (*f, kids.iter().map(Element::id).collect()))
            .collect()
    }
}

#[derive(Clone, Debug)]
struct Node {
    element: Element,
    has_children: bool,
}

/// Macro grid plus refinement forest. The leaves form the active grid.
#[derive(Clone, Debug)]
pub struct HierarchicalMesh {
    macro_grid: MacroGrid,
    nodes: HashMap<ElementId, Node>,
    leaves: Vec<ElementId>,
    leaf_index: HashMap<ElementId, usize>,
    intersections: Vec<Vec<Intersection>>,
}

impl HierarchicalMesh {
    pub fn new(macro_grid: MacroGrid) -> Self {
        let mut nodes = HashMap::new();
        for c in 0..macro_grid.num_cells() {
            let id = ElementId::macro_element(c);
            let e = Element::new(id, macro_grid.cell_type(), &macro_grid.cell_vertices(c));
            nodes.insert(
                id,
                Node {
                    element: e,
                    has_children: false,
                },
            );
        }
        let mut mesh = Self {
            macro_grid,
            nodes,
            leaves: Vec::new(),
            leaf_index: HashMap::new(),
            intersections: Vec::new(),
        };
        mesh.rebuild();
        mesh
    }

    pub fn macro_grid(&self) -> &MacroGrid {
        &self.macro_grid
    }

    pub fn cell_type(&self) -> CellType {
        self.macro_grid.cell_type()
    }

    /// Leaf ids in the canonical order (macro index, then child path).
    pub fn leaves(&self) -> &[ElementId] {
        &self.leaves
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaf_elements(&self) -> impl ExactSizeIterator<Item = &Element> + '_ {
        self.leaves.iter().map(move |id| &self.nodes[id].element)
    }

    /// Any element of the tree (leaf or ancestor).
    pub fn element(&self, id: ElementId) -> Option<&Element> {
        self.nodes.get(&id).map(|n| &n.element)
    }

    pub fn leaf(&self, id: ElementId) -> Result<&Element> {
        match self.nodes.get(&id) {
            Some(n) if !n.has_children => Ok(&n.element),
            Some(_) => Err(Error::NotALeaf(id)),
            None => Err(Error::UnknownElement(id)),
        }
    }

    pub fn is_leaf(&self, id: ElementId) -> bool {
        self.leaf_index.contains_key(&id)
    }

    /// Position of a leaf in [`leaves`](Self::leaves).
    pub fn leaf_position(&self, id: ElementId) -> Option<usize> {
        self.leaf_index.get(&id).copied()
    }

    /// Facets of a leaf. Interior facets appear from both sides; at a hanging
    /// node the finer side sees its full edge and the coarser side sees the
    /// matching sub-segments.
    pub fn intersections(&self, id: ElementId) -> &[Intersection] {
        match self.leaf_index.get(&id) {
            Some(&i) => &self.intersections[i],
            None => &[],
        }
    }

    pub fn area(&self) -> f64 {
        self.leaf_elements().map(Element::area).sum()
    }

    pub fn max_level(&self) -> u8 {
        self.leaves.iter().map(|id| id.level()).max().unwrap_or(0)
    }

    /// Whether all siblings of `id` (including itself) are leaves.
    pub fn can_coarsen(&self, id: ElementId) -> bool {
        match id.parent().and_then(ElementId::children) {
            Some(sibs) => sibs.iter().all(|s| self.is_leaf(*s)),
            None => false,
        }
    }

    /// Refines every listed leaf once.
    pub fn refine(&mut self, ids: &[ElementId]) -> Result<AdaptationReport> {
        let mut marks = AdaptationMarks::new();
        for &id in ids {
            marks.set(id, Mark::Refine);
        }
        self.adapt(&marks)
    }

    /// Applies refine and coarsen marks. A coarsen mark is honored only when
    /// all four siblings are leaves marked for coarsening; otherwise it is
    /// demoted to keep.
    pub fn adapt(&mut self, marks: &AdaptationMarks) -> Result<AdaptationReport> {
        for (id, _) in marks.iter() {
            if !self.nodes.contains_key(&id) {
                return Err(Error::UnknownElement(id));
            }
            if !self.is_leaf(id) {
                return Err(Error::NotALeaf(id));
            }
        }
        let mut report = AdaptationReport::default();

        let mut fathers: BTreeMap<ElementId, usize> = BTreeMap::new();
        for (id, m) in marks.iter() {
            if m == Mark::Coarsen {
                match id.parent() {
                    Some(p) => *fathers.entry(p).or_insert(0) += 1,
                    None => report.demoted.push(id),
                }
            }
        }
        for (father, count) in fathers {
            let kids = father.children().expect("father of an existing child");
            let complete = count == 4 && kids.iter().all(|&k| marks.get(k) == Mark::Coarsen);
            if !complete {
                report
                    .demoted
                    .extend(kids.iter().filter(|&&k| marks.get(k) == Mark::Coarsen));
                continue;
            }
            let removed = kids
                .iter()
                .map(|k| self.nodes.remove(k).expect("leaf child").element)
                .collect();
            self.nodes.get_mut(&father).expect("father exists").has_children = false;
            report.coarsened.push((father, removed));
        }

        for (id, m) in marks.iter() {
            if m != Mark::Refine {
                continue;
            }
            let node = self.nodes.get_mut(&id).expect("checked above");
            let kids = node.element.children().ok_or(Error::LevelLimit(MAX_LEVEL))?;
            node.has_children = true;
            let ids = kids.each_ref().map(Element::id);
            for k in kids {
                self.nodes.insert(
                    k.id(),
                    Node {
                        element: k,
                        has_children: false,
                    },
                );
            }
            report.refined.push((id, ids));
        }
        report.demoted.sort();
        report.demoted.dedup();
        if !report.is_empty() {
            self.rebuild();
        }
        Ok(report)
    }

    fn rebuild(&mut self) {
        let mut leaves: Vec<ElementId> = self
            .nodes
            .iter()
            .filter(|(_, n)| !n.has_children)
            .map(|(&id, _)| id)
            .collect();
        leaves.sort_unstable();
        self.leaf_index = leaves.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        self.leaves = leaves;
        self.intersections = self.compute_intersections();
    }

    fn compute_intersections(&self) -> Vec<Vec<Intersection>> {
        type EdgeKey = [u64; 4];
        fn key(a: Point, b: Point) -> EdgeKey {
            let ka = [canonical_bits(a[0]), canonical_bits(a[1])];
            let kb = [canonical_bits(b[0]), canonical_bits(b[1])];
            if ka <= kb {
                [ka[0], ka[1], kb[0], kb[1]]
            } else {
                [kb[0], kb[1], ka[0], ka[1]]
            }
        }

        let mut owners: HashMap<EdgeKey, Vec<(usize, usize)>> = HashMap::new();
        let mut vertices: HashSet<[u64; 2]> = HashSet::new();
        for (li, e) in self.leaf_elements().enumerate() {
            for (ei, (a, b)) in e.edges().enumerate() {
                owners.entry(key(a, b)).or_default().push((li, ei));
                vertices.insert([canonical_bits(a[0]), canonical_bits(a[1])]);
            }
        }
        let other_owner = |a: Point, b: Point, me: usize| -> Option<(usize, usize)> {
            owners
                .get(&key(a, b))
                .and_then(|v| v.iter().copied().find(|&(l, _)| l != me))
        };
        let is_vertex = |p: Point| vertices.contains(&[canonical_bits(p[0]), canonical_bits(p[1])]);
        let max_level = self.max_level();

        // Recursively cover [a,b] by exactly matching finer edges.
        // A segment covered by finer edges has its midpoint as a leaf vertex.
        struct Lookup<'a> {
            find: &'a dyn Fn(Point, Point, usize) -> Option<(usize, usize)>,
            is_vertex: &'a dyn Fn(Point) -> bool,
        }
        fn cover(
            a: Point,
            b: Point,
            depth: u8,
            me: usize,
            lookup: &Lookup<'_>,
            out: &mut Vec<(Point, Point, usize, usize)>,
        ) -> bool {
            if let Some((l, e)) = (lookup.find)(a, b, me) {
                out.push((a, b, l, e));
                return true;
            }
            let m = midpoint(a, b);
            if depth == 0 || !(lookup.is_vertex)(m) {
                return false;
            }
            let mark = out.len();
            if cover(a, m, depth - 1, me, lookup, out) && cover(m, b, depth - 1, me, lookup, out) {
                true
            } else {
                out.truncate(mark);
                false
            }
        }

        let lookup = Lookup {
            find: &other_owner,
            is_vertex: &is_vertex,
        };
        let n = self.leaves.len();
        let mut result: Vec<Vec<Option<Vec<Intersection>>>> = vec![Vec::new(); n];
        let mut coarse_neighbor: HashMap<(usize, usize), usize> = HashMap::new();
        let elements: Vec<&Element> = self.leaf_elements().collect();
        for (li, e) in elements.iter().enumerate() {
            let id = e.id();
            for (a, b) in e.edges() {
                let mut pieces = Vec::new();
                let depth = max_level - e.level();
                let slot = if cover(a, b, depth, li, &lookup, &mut pieces) {
                    let mut v = Vec::with_capacity(pieces.len());
                    for (pa, pb, ol, oe) in pieces {
                        v.push(Intersection::new(id, Some(self.leaves[ol]), pa, pb));
                        if distance(pa, pb) < distance(a, b) {
                            coarse_neighbor.insert((ol, oe), li);
                        }
                    }
                    Some(v)
                } else {
                    None
                };
                result[li].push(slot);
            }
        }
        elements
            .iter()
            .enumerate()
            .map(|(li, e)| {
                let id = e.id();
                e.edges()
                    .enumerate()
                    .flat_map(|(ei, (a, b))| match result[li][ei].take() {
                        Some(v) => v,
                        None => {
                            let outside = coarse_neighbor.get(&(li, ei)).map(|&c| self.leaves[c]);
                            vec![Intersection::new(id, outside, a, b)]
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square_mesh() -> HierarchicalMesh {
        HierarchicalMesh::new(MacroGrid::unit_square(1).unwrap())
    }

    fn two_squares() -> HierarchicalMesh {
        HierarchicalMesh::new(MacroGrid::rectangle(0.0, 2.0, 0.0, 1.0, 2, 1).unwrap())
    }

    #[test]
    fn single_element_has_four_boundary_facets() {
        let mesh = unit_square_mesh();
        let id = mesh.leaves()[0];
        let is = mesh.intersections(id);
        assert_eq!(is.len(), 4);
        for i in is {
            assert!(i.is_boundary());
            assert_eq!(i.length(), 1.0);
            assert!((i.normal()[0].hypot(i.normal()[1]) - 1.0).abs() < 1e-15);
        }
        assert_eq!(is[0].normal(), [0.0, -1.0]);
    }

    #[test]
    fn two_squares_share_one_facet() {
        let mesh = two_squares();
        let [l, r] = [mesh.leaves()[0], mesh.leaves()[1]];
        for (me, other) in [(l, r), (r, l)] {
            let is = mesh.intersections(me);
            assert_eq!(is.iter().filter(|i| i.is_boundary()).count(), 3);
            let inner: Vec<_> = is.iter().filter(|i| !i.is_boundary()).collect();
            assert_eq!(inner.len(), 1);
            assert_eq!(inner[0].outside(), Some(other));
        }
        let nl = mesh
            .intersections(l)
            .iter()
            .find(|i| !i.is_boundary())
            .unwrap()
            .normal();
        let nr = mesh
            .intersections(r)
            .iter()
            .find(|i| !i.is_boundary())
            .unwrap()
            .normal();
        assert_eq!(nl, [1.0, 0.0]);
        assert_eq!(nr, [-1.0, 0.0]);
    }

    #[test]
    fn hanging_facet_seen_as_sub_segments_from_coarse_side() {
        let mut mesh = two_squares();
        let left = mesh.leaves()[0];
        let right = mesh.leaves()[1];
        mesh.refine(&[left]).unwrap();
        let coarse: Vec<_> = mesh.intersections(right).iter().filter(|i| !i.is_boundary()).collect();
        assert_eq!(coarse.len(), 2);
        for i in &coarse {
            assert_eq!(i.length(), 0.5);
            assert_eq!(i.outside().unwrap().parent(), Some(left));
        }
        // The fine side reports its full edge with the coarse neighbor.
        let fine: Vec<_> = mesh
            .leaves()
            .iter()
            .flat_map(|&id| mesh.intersections(id).iter())
            .filter(|i| i.outside() == Some(right))
            .collect();
        assert_eq!(fine.len(), 2);
        assert!(fine.iter().all(|i| i.length() == 0.5 && i.normal() == [1.0, 0.0]));
    }

    #[test]
    fn refine_unit_square() {
        let mut mesh = unit_square_mesh();
        let id = mesh.leaves()[0];
        let report = mesh.refine(&[id]).unwrap();
        assert_eq!(report.refined.len(), 1);
        assert_eq!(mesh.num_leaves(), 4);
        for e in mesh.leaf_elements() {
            assert!((e.diameter() - 0.5f64.sqrt()).abs() < 1e-15);
            assert!((e.area() - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn coarsening_needs_all_siblings() {
        let mut mesh = unit_square_mesh();
        let root = mesh.leaves()[0];
        mesh.refine(&[root]).unwrap();
        let kids = mesh.leaves().to_vec();

        let mut marks = AdaptationMarks::new();
        for &k in &kids[..3] {
            marks.set(k, Mark::Coarsen);
        }
        let report = mesh.adapt(&marks).unwrap();
        assert!(report.is_empty());
        assert_eq!(report.demoted, kids[..3].to_vec());
        assert_eq!(mesh.num_leaves(), 4);

        marks.set(kids[3], Mark::Coarsen);
        let report = mesh.adapt(&marks).unwrap();
        assert_eq!(report.coarsened.len(), 1);
        assert_eq!(report.coarsened[0].0, root);
        assert_eq!(mesh.leaves(), &[root]);
    }

    #[test]
    fn marking_non_leaf_is_an_error() {
        let mut mesh = unit_square_mesh();
        let root = mesh.leaves()[0];
        mesh.refine(&[root]).unwrap();
        assert!(matches!(mesh.refine(&[root]), Err(Error::NotALeaf(_))));
        let bogus = ElementId::macro_element(5);
        assert!(matches!(mesh.refine(&[bogus]), Err(Error::UnknownElement(_))));
    }

    #[test]
    fn macro_elements_cannot_coarsen() {
        let mut mesh = unit_square_mesh();
        let root = mesh.leaves()[0];
        let mut marks = AdaptationMarks::new();
        marks.set(root, Mark::Coarsen);
        let report = mesh.adapt(&marks).unwrap();
        assert!(report.is_empty());
        assert_eq!(report.demoted, vec![root]);
    }

    #[test]
    fn triangle_red_refinement() {
        let grid = MacroGrid::new(
            CellType::Triangle,
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![vec![0, 1, 2]],
        )
        .unwrap();
        let mut mesh = HierarchicalMesh::new(grid);
        let root = mesh.leaves()[0];
        mesh.refine(&[root]).unwrap();
        assert_eq!(mesh.num_leaves(), 4);
        for e in mesh.leaf_elements() {
            assert!((e.area() - 0.125).abs() < 1e-15);
            assert!(e.map().det() > 0.0);
        }
        // Middle child shares all three edges with its siblings.
        let middle = root.child(3).unwrap();
        let is = mesh.intersections(middle);
        assert_eq!(is.len(), 3);
        assert!(is.iter().all(|i| !i.is_boundary()));
    }
}
