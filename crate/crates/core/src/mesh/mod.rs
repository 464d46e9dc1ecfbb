//! Nested conforming simplicial meshes on axis-aligned boxes.
//!
//! Meshes are immutable. Refinement by newest-vertex bisection returns a new
//! generation that shares the vertex numbering of its parent: vertices of
//! generation `g` keep their indices in every descendant, and each vertex
//! created by bisection records the edge it splits.

pub mod geometry;
mod refine;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::Point;

pub use refine::bisect;

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

fn next_id() -> u64 {
    NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed)
}

/// Axis-aligned box `[lo, hi]` in dimension 2 or 3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxDomain {
    pub dim: usize,
    pub lo: Point,
    pub hi: Point,
}

impl BoxDomain {
    pub fn new(dim: usize, lo: Point, hi: Point) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return invalid(format!("dimension must be 2 or 3, got {dim}"));
        }
        for k in 0..dim {
            if !(hi[k] - lo[k] > 0.0) || !lo[k].is_finite() || !hi[k].is_finite() {
                return invalid(format!("box has non-positive extent along axis {k}"));
            }
        }
        let mut lo = lo;
        let mut hi = hi;
        for k in dim..3 {
            lo[k] = 0.0;
            hi[k] = 0.0;
        }
        Ok(Self { dim, lo, hi })
    }

    /// `[a, b]^dim`.
    pub fn cube(dim: usize, a: f64, b: f64) -> Result<Self> {
        Self::new(dim, [a; 3], [b; 3])
    }

    pub fn unit(dim: usize) -> Self {
        Self::cube(dim, 0.0, 1.0).expect("unit box is valid")
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|k| self.hi[k] - self.lo[k]).product()
    }

    fn tolerance(&self) -> f64 {
        let extent = (0..self.dim)
            .map(|k| self.hi[k] - self.lo[k])
            .fold(0.0_f64, f64::max);
        1e-12 * extent.max(1.0)
    }

    pub fn contains(&self, x: &Point) -> bool {
        let tol = self.tolerance();
        (0..self.dim).all(|k| x[k] >= self.lo[k] - tol && x[k] <= self.hi[k] + tol)
    }

    pub fn on_boundary(&self, x: &Point) -> bool {
        let tol = self.tolerance();
        (0..self.dim).any(|k| (x[k] - self.lo[k]).abs() <= tol || (x[k] - self.hi[k]).abs() <= tol)
    }
}

/// A simplex with ordered vertices `(x0, ..., xd)`. Its refinement edge is
/// `x0 -- x_tag`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Simplex {
    pub vertices: [usize; 4],
    pub tag: u8,
    /// Number of bisections separating this simplex from its initial ancestor.
    pub level: u32,
    /// Index of the containing element in the previous generation.
    pub parent: Option<usize>,
}

impl Simplex {
    pub fn vertices(&self, dim: usize) -> &[usize] {
        &self.vertices[..=dim]
    }

    pub fn refinement_edge(&self) -> (usize, usize) {
        edge_key(self.vertices[0], self.vertices[self.tag as usize])
    }
}

pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// A (d-1)-face with its one or two owning elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    /// Sorted vertex indices; the third entry is unused in 2D.
    pub vertices: [usize; 3],
    pub owners: [usize; 2],
    pub owner_count: u8,
}

impl Face {
    pub fn is_interior(&self) -> bool {
        self.owner_count == 2
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    id: u64,
    ancestors: Vec<u64>,
    generation: u32,
    dim: usize,
    domain: BoxDomain,
    vertices: Vec<Point>,
    vertex_parents: Vec<Option<[usize; 2]>>,
    /// Vertex count of every generation in the lineage, this one last.
    level_vertices: Vec<usize>,
    elements: Vec<Simplex>,
    faces: Vec<Face>,
    overfull_faces: usize,
}

impl Mesh {
    pub(crate) fn assemble(
        dim: usize,
        domain: BoxDomain,
        vertices: Vec<Point>,
        vertex_parents: Vec<Option<[usize; 2]>>,
        elements: Vec<Simplex>,
        parent: Option<&Mesh>,
    ) -> Result<Self> {
        for (i, el) in elements.iter().enumerate() {
            let pts = gather(&vertices, el.vertices(dim));
            if !(geometry::volume(&pts[..=dim], dim) > 0.0) {
                return invalid(format!("element {i} has zero volume"));
            }
        }
        let (faces, overfull_faces) = build_faces(dim, &elements);
        let (ancestors, generation, mut level_vertices) = match parent {
            Some(p) => {
                let mut a = p.ancestors.clone();
                a.push(p.id);
                (a, p.generation + 1, p.level_vertices.clone())
            }
            None => (Vec::new(), 0, Vec::new()),
        };
        level_vertices.push(vertices.len());
        Ok(Self {
            id: next_id(),
            ancestors,
            generation,
            dim,
            domain,
            vertices,
            vertex_parents,
            level_vertices,
            elements,
            faces,
            overfull_faces,
        })
    }

    /// Mesh from explicit simplices. Refinement edges are the longest edge of
    /// each element (ties: the edge whose opposite vertices have the lowest index).
    /// The domain is the bounding box of the vertices.
    pub fn from_simplices(dim: usize, vertices: Vec<Point>, elements: &[Vec<usize>]) -> Result<Arc<Self>> {
        if dim != 2 && dim != 3 {
            return invalid(format!("dimension must be 2 or 3, got {dim}"));
        }
        if vertices.is_empty() || elements.is_empty() {
            return invalid("mesh needs at least one element");
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &vertices {
            for k in 0..dim {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        let domain = BoxDomain::new(dim, lo, hi)?;
        let mut simplices = Vec::with_capacity(elements.len());
        for (i, el) in elements.iter().enumerate() {
            if el.len() != dim + 1 {
                return invalid(format!("element {i} has {} vertices, expected {}", el.len(), dim + 1));
            }
            if let Some(&bad) = el.iter().find(|&&v| v >= vertices.len()) {
                return invalid(format!("element {i} references missing vertex {bad}"));
            }
            simplices.push(longest_edge_simplex(&vertices, el, dim));
        }
        let parents = vec![None; vertices.len()];
        Self::assemble(dim, domain, vertices, parents, simplices, None).map(Arc::new)
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// The edge each bisection vertex splits; `None` for initial vertices.
    pub fn vertex_parents(&self) -> &[Option<[usize; 2]>] {
        &self.vertex_parents
    }

    /// Number of vertices of each generation from the root to `self`. Vertices
    /// are only ever appended, so generation `g` owns the prefix `0..counts[g]`.
    pub fn lineage_vertex_counts(&self) -> &[usize] {
        &self.level_vertices
    }

    pub fn elements(&self) -> &[Simplex] {
        &self.elements
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn interior_faces(&self) -> impl Iterator<Item = &Face> {
        self.faces.iter().filter(|f| f.is_interior())
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    /// True when `self` is `other` or was produced from it by refinement.
    pub fn descends_from(&self, other: &Mesh) -> bool {
        self.id == other.id || self.ancestors.contains(&other.id)
    }

    /// Vertex coordinates of element `e`, in its stored order.
    pub fn element_points(&self, e: usize) -> [Point; 4] {
        gather(&self.vertices, self.elements[e].vertices(self.dim))
    }

    pub fn element_volume(&self, e: usize) -> f64 {
        let pts = self.element_points(e);
        geometry::volume(&pts[..=self.dim], self.dim)
    }

    pub fn element_diameter(&self, e: usize) -> f64 {
        let pts = self.element_points(e);
        geometry::diameter(&pts[..=self.dim])
    }

    pub fn element_barycenter(&self, e: usize) -> Point {
        let pts = self.element_points(e);
        let w = 1.0 / (self.dim + 1) as f64;
        geometry::from_barycentric(&pts, self.dim, &[w; 4])
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.num_elements()).map(|e| self.element_volume(e)).sum()
    }

    /// `max h/rho` over all elements, where `rho` is the inscribed-ball diameter.
    pub fn shape_regularity(&self) -> f64 {
        (0..self.num_elements())
            .map(|e| element_shape_ratio(&self.element_points(e), self.dim))
            .fold(0.0, f64::max)
    }

    /// Lowest-index element containing `x`, or `None` outside the domain.
    pub fn locate_point(&self, x: &Point) -> Option<usize> {
        if !self.domain.contains(x) {
            return None;
        }
        let tol = 1e-12;
        (0..self.num_elements()).find(|&e| {
            let pts = self.element_points(e);
            let lambda = geometry::barycentric(&pts, self.dim, x);
            lambda[..=self.dim].iter().all(|&l| l >= -tol)
        })
    }

    /// Every face has one or two owners and one-owner faces lie on the box boundary.
    pub fn is_conforming(&self) -> bool {
        if self.overfull_faces > 0 {
            return false;
        }
        self.faces.iter().filter(|f| !f.is_interior()).all(|f| {
            let verts = &f.vertices[..self.dim];
            (0..self.dim).any(|k| {
                let on = |bound: f64| {
                    verts
                        .iter()
                        .all(|&v| (self.vertices[v][k] - bound).abs() <= self.domain.tolerance())
                };
                on(self.domain.lo[k]) || on(self.domain.hi[k])
            })
        })
    }

    /// Plain-text dump: `dim nv ne`, one coordinate line per vertex, then one
    /// line per element with its ordered vertex indices and refinement-edge tag.
    pub fn to_dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {}", self.dim, self.num_vertices(), self.num_elements());
        for v in &self.vertices {
            let coords: Vec<String> = v[..self.dim].iter().map(|c| format!("{c:e}")).collect();
            let _ = writeln!(out, "{}", coords.join(" "));
        }
        for el in &self.elements {
            let idx: Vec<String> = el.vertices(self.dim).iter().map(|i| i.to_string()).collect();
            let _ = writeln!(out, "{} {}", idx.join(" "), el.tag);
        }
        out
    }

    /// Parse a dump written by [`Mesh::to_dump`]. The result starts a new lineage.
    pub fn from_dump(text: &str) -> Result<Arc<Self>> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let parse_err = |line: usize, message: &str| Error::Parse { line: line + 1, message: message.to_string() };
        let (hl, header) = lines.next().ok_or_else(|| parse_err(0, "empty mesh dump"))?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse_err(hl, "bad header")))
            .collect::<Result<_>>()?;
        if head.len() != 3 {
            return Err(parse_err(hl, "header must be `dim nv ne`"));
        }
        let (dim, nv, ne) = (head[0], head[1], head[2]);
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = lines.next().ok_or_else(|| parse_err(hl, "truncated vertex list"))?;
            let c: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| parse_err(ln, "bad coordinate")))
                .collect::<Result<_>>()?;
            if c.len() != dim {
                return Err(parse_err(ln, "wrong coordinate count"));
            }
            let mut p = [0.0; 3];
            p[..dim].copy_from_slice(&c);
            vertices.push(p);
        }
        let mut simplices = Vec::with_capacity(ne);
        for _ in 0..ne {
            let (ln, l) = lines.next().ok_or_else(|| parse_err(hl, "truncated element list"))?;
            let idx: Vec<usize> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| parse_err(ln, "bad index")))
                .collect::<Result<_>>()?;
            if idx.len() != dim + 2 || idx[..=dim].iter().any(|&v| v >= nv) || idx[dim + 1] == 0 || idx[dim + 1] > dim {
                return Err(parse_err(ln, "bad element line"));
            }
            let mut verts = [0; 4];
            verts[..=dim].copy_from_slice(&idx[..=dim]);
            simplices.push(Simplex { vertices: verts, tag: idx[dim + 1] as u8, level: 0, parent: None });
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &vertices {
            for k in 0..dim {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        let domain = BoxDomain::new(dim, lo, hi)?;
        let parents = vec![None; vertices.len()];
        Self::assemble(dim, domain, vertices, parents, simplices, None).map(Arc::new)
    }
}

pub(crate) fn gather(vertices: &[Point], idx: &[usize]) -> [Point; 4] {
    let mut pts = [[0.0; 3]; 4];
    for (p, &i) in pts.iter_mut().zip(idx) {
        *p = vertices[i];
    }
    pts
}

pub fn element_shape_ratio(pts: &[Point], dim: usize) -> f64 {
    let h = geometry::diameter(&pts[..=dim]);
    let rho = 2.0 * geometry::inradius(pts, dim);
    h / rho
}

fn longest_edge_simplex(vertices: &[Point], el: &[usize], dim: usize) -> Simplex {
    let mut best: Option<(f64, usize, (usize, usize))> = None;
    for a in 0..=dim {
        for b in a + 1..=dim {
            let len = geometry::distance(&vertices[el[a]], &vertices[el[b]]);
            let opposite = (0..=dim)
                .filter(|&k| k != a && k != b)
                .map(|k| el[k])
                .min()
                .unwrap_or(usize::MAX);
            let better = match best {
                None => true,
                Some((l, o, _)) => {
                    let scale = l.max(len);
                    len > l + 1e-12 * scale || ((len - l).abs() <= 1e-12 * scale && opposite < o)
                }
            };
            if better {
                best = Some((len, opposite, (a, b)));
            }
        }
    }
    let (_, _, (a, b)) = best.expect("simplex has edges");
    let (first, last) = if el[a] < el[b] { (el[a], el[b]) } else { (el[b], el[a]) };
    let mut middle: Vec<usize> = (0..=dim).filter(|&k| k != a && k != b).map(|k| el[k]).collect();
    middle.sort_unstable();
    let mut verts = [0; 4];
    verts[0] = first;
    verts[1..dim].copy_from_slice(&middle);
    verts[dim] = last;
    Simplex { vertices: verts, tag: dim as u8, level: 0, parent: None }
}

fn build_faces(dim: usize, elements: &[Simplex]) -> (Vec<Face>, usize) {
    let mut index: HashMap<[usize; 3], usize> = HashMap::with_capacity(elements.len() * (dim + 1));
    let mut faces: Vec<Face> = Vec::with_capacity(elements.len() * (dim + 1) / 2 + 16);
    let mut overfull = 0;
    for (e, el) in elements.iter().enumerate() {
        let verts = el.vertices(dim);
        for skip in 0..=dim {
            let mut key = [usize::MAX; 3];
            let mut k = 0;
            for (i, &v) in verts.iter().enumerate() {
                if i != skip {
                    key[k] = v;
                    k += 1;
                }
            }
            key[..dim].sort_unstable();
            match index.get(&key) {
                Some(&f) => {
                    let face = &mut faces[f];
                    if face.owner_count >= 2 {
                        overfull += 1;
                    } else {
                        face.owners[1] = e;
                    }
                    face.owner_count = face.owner_count.saturating_add(1);
                }
                None => {
                    index.insert(key, faces.len());
                    faces.push(Face { vertices: key, owners: [e, usize::MAX], owner_count: 1 });
                }
            }
        }
    }
    (faces, overfull)
}

/// Uniform simplicial mesh of `domain`: each grid cell splits into 2
/// triangles (2D) or 6 Kuhn tetrahedra (3D), all sharing the cell diagonal
/// from the low corner to the high corner as refinement edge.
///
/// `subdivisions` holds either one count for every axis or one per axis.
pub fn create_box_mesh(domain: BoxDomain, subdivisions: &[usize]) -> Result<Arc<Mesh>> {
    let dim = domain.dim;
    let n: Vec<usize> = match subdivisions.len() {
        1 => vec![subdivisions[0]; dim],
        l if l == dim => subdivisions.to_vec(),
        l => return invalid(format!("expected 1 or {dim} subdivision counts, got {l}")),
    };
    if n.iter().any(|&k| k == 0) {
        return invalid("subdivisions must be at least 1");
    }
    let counts: Vec<usize> = n.iter().map(|k| k + 1).collect();
    let step: Vec<f64> = (0..dim).map(|k| (domain.hi[k] - domain.lo[k]) / n[k] as f64).collect();
    let vid = |ijk: [usize; 3]| -> usize {
        if dim == 2 {
            ijk[0] + counts[0] * ijk[1]
        } else {
            ijk[0] + counts[0] * (ijk[1] + counts[1] * ijk[2])
        }
    };
    let nz = if dim == 3 { counts[2] } else { 1 };
    let mut vertices = Vec::with_capacity(counts.iter().product());
    for k in 0..nz {
        for j in 0..counts[1] {
            for i in 0..counts[0] {
                let idx = [i, j, k];
                let mut p = [0.0; 3];
                for a in 0..dim {
                    // hit the far wall exactly
                    p[a] = if idx[a] == n[a] {
                        domain.hi[a]
                    } else {
                        domain.lo[a] + idx[a] as f64 * step[a]
                    };
                }
                vertices.push(p);
            }
        }
    }
    let perms: &[[usize; 3]] = if dim == 2 {
        &[[0, 1, 2], [1, 0, 2]]
    } else {
        &[[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]]
    };
    let mut elements = Vec::new();
    let cz = if dim == 3 { n[2] } else { 1 };
    for k in 0..cz {
        for j in 0..n[1] {
            for i in 0..n[0] {
                for perm in perms {
                    let mut corner = [i, j, k];
                    let mut verts = [0; 4];
                    verts[0] = vid(corner);
                    for (s, &axis) in perm.iter().take(dim).enumerate() {
                        corner[axis] += 1;
                        verts[s + 1] = vid(corner);
                    }
                    elements.push(Simplex { vertices: verts, tag: dim as u8, level: 0, parent: None });
                }
            }
        }
    }
    let parents = vec![None; vertices.len()];
    Mesh::assemble(dim, domain, vertices, parents, elements, None).map(Arc::new)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_two_subdivisions() {
        let m = create_box_mesh(BoxDomain::unit(2), &[2]).unwrap();
        assert_eq!(m.num_vertices(), 9);
        assert_eq!(m.num_elements(), 8);
        assert!(m.is_conforming());
        assert!((m.total_volume() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn unit_cube_kuhn() {
        let m = create_box_mesh(BoxDomain::unit(3), &[1]).unwrap();
        assert_eq!(m.num_vertices(), 8);
        assert_eq!(m.num_elements(), 6);
        assert!(m.is_conforming());
        for e in 0..6 {
            assert!((m.element_volume(e) - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_subdivisions_rejected() {
        assert!(matches!(
            create_box_mesh(BoxDomain::unit(2), &[0]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn degenerate_box_rejected() {
        assert!(BoxDomain::new(2, [0.0; 3], [1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn equilateral_shape_ratio() {
        let h = 3.0_f64.sqrt() / 2.0;
        let m = Mesh::from_simplices(2, vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, h, 0.0]], &[vec![0, 1, 2]]).unwrap();
        assert!((m.shape_regularity() - 3.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn right_isoceles_shape_ratio() {
        let m = Mesh::from_simplices(2, vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], &[vec![0, 1, 2]]).unwrap();
        // h = sqrt(2), inradius r = area / semiperimeter, rho = 2r
        let r = 0.5 / ((2.0 + 2.0_f64.sqrt()) / 2.0);
        let expected = 2.0_f64.sqrt() / (2.0 * r);
        assert!((m.shape_regularity() - expected).abs() < 1e-12);
        assert!((expected - 2.414213562).abs() < 1e-8);
        // longest edge is the hypotenuse
        assert_eq!(m.elements()[0].refinement_edge(), (1, 2));
    }

    #[test]
    fn kuhn_tets_share_one_shape_ratio() {
        let m = create_box_mesh(BoxDomain::unit(3), &[1]).unwrap();
        let ratios: Vec<f64> = (0..6).map(|e| element_shape_ratio(&m.element_points(e), 3)).collect();
        // direct computation for the path simplex (0, e1, e1+e2, e1+e2+e3)
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, 1.0, 1.0]];
        let vol = 1.0 / 6.0;
        // two right triangles with legs (1,1) and two with legs (1, sqrt 2)
        let area = 2.0 * 0.5 + 2.0 * 0.5 * 2.0_f64.sqrt();
        let expected = 3.0_f64.sqrt() / (2.0 * 3.0 * vol / area);
        assert!((element_shape_ratio(&pts, 3) - expected).abs() < 1e-12);
        for r in ratios {
            assert!((r - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn locate_barycenter_and_outside() {
        let m = create_box_mesh(BoxDomain::unit(2), &[3]).unwrap();
        for e in 0..m.num_elements() {
            assert_eq!(m.locate_point(&m.element_barycenter(e)), Some(e));
        }
        assert_eq!(m.locate_point(&[1.5, 0.5, 0.0]), None);
    }

    #[test]
    fn locate_shared_face_picks_lowest_index() {
        let m = create_box_mesh(BoxDomain::unit(2), &[2]).unwrap();
        for f in m.interior_faces() {
            let x = geometry::midpoint(&m.vertices()[f.vertices[0]], &m.vertices()[f.vertices[1]]);
            let lowest = f.owners[0].min(f.owners[1]);
            assert_eq!(m.locate_point(&x), Some(lowest));
        }
    }

    #[test]
    fn dump_round_trip() {
        let m = create_box_mesh(BoxDomain::unit(3), &[2]).unwrap();
        let text = m.to_dump();
        assert!(text.starts_with("3 27 48\n"));
        let back = Mesh::from_dump(&text).unwrap();
        assert_eq!(back.to_dump(), text);
    }
}
