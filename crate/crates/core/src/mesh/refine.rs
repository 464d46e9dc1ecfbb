//! Newest-vertex bisection with recursive conforming closure.
//!
//! Simplices carry an ordered vertex tuple `(x0, ..., xd)` and a tag `k`;
//! the refinement edge is `x0 -- xk`. Bisection at the midpoint `z` yields
//!
//! ```text
//! (x0, ..., x_{k-1}, z, x_{k+1}, ..., xd)   and   (x1, ..., xk, z, x_{k+1}, ..., xd)
//! ```
//!
//! both tagged `k - 1` (or `d` when `k == 1`). In 2D this is classical
//! newest-vertex bisection. An edge is only split once every element around
//! it has that edge as refinement edge, so no hanging nodes appear.

use std::collections::HashMap;
use std::sync::Arc;

use super::{edge_key, geometry, Mesh, Simplex};
use crate::error::{invalid, Error, Result};
use crate::Point;

type Edge = (usize, usize);

struct Refiner {
    dim: usize,
    vertices: Vec<Point>,
    vertex_parents: Vec<Option<[usize; 2]>>,
    elems: Vec<Simplex>,
    alive: Vec<bool>,
    edge_patch: HashMap<Edge, Vec<usize>>,
    bisections: usize,
    cap: usize,
}

impl Refiner {
    fn new(mesh: &Mesh, cap: usize) -> Self {
        let dim = mesh.dim();
        let elems: Vec<Simplex> = mesh
            .elements()
            .iter()
            .enumerate()
            .map(|(i, el)| Simplex { parent: Some(i), ..*el })
            .collect();
        let mut refiner = Self {
            dim,
            vertices: mesh.vertices().to_vec(),
            vertex_parents: mesh.vertex_parents().to_vec(),
            alive: Vec::with_capacity(elems.len() * 2),
            elems: Vec::with_capacity(elems.len() * 2),
            edge_patch: HashMap::with_capacity(elems.len() * (dim + 1)),
            bisections: 0,
            cap,
        };
        for el in elems {
            refiner.push(el);
        }
        refiner
    }

    fn edges(&self, el: &Simplex) -> impl Iterator<Item = Edge> {
        let v = el.vertices;
        let d = self.dim;
        (0..=d).flat_map(move |a| (a + 1..=d).map(move |b| edge_key(v[a], v[b])))
    }

    fn push(&mut self, el: Simplex) -> usize {
        let idx = self.elems.len();
        let edges: Vec<Edge> = self.edges(&el).collect();
        for e in edges {
            self.edge_patch.entry(e).or_default().push(idx);
        }
        self.elems.push(el);
        self.alive.push(true);
        idx
    }

    fn retire(&mut self, idx: usize) {
        self.alive[idx] = false;
        let edges: Vec<Edge> = self.edges(&self.elems[idx]).collect();
        for e in edges {
            if let Some(list) = self.edge_patch.get_mut(&e) {
                list.retain(|&t| t != idx);
                if list.is_empty() {
                    self.edge_patch.remove(&e);
                }
            }
        }
    }

    fn refine_element(&mut self, idx: usize) -> Result<()> {
        if self.alive[idx] {
            let edge = self.elems[idx].refinement_edge();
            self.refine_edge(edge)?;
        }
        Ok(())
    }

    fn refine_edge(&mut self, edge: Edge) -> Result<()> {
        let patch = loop {
            let Some(patch) = self.edge_patch.get(&edge) else {
                return Ok(());
            };
            let incompatible = patch
                .iter()
                .copied()
                .find(|&t| self.elems[t].refinement_edge() != edge);
            match incompatible {
                Some(t) => self.refine_element(t)?,
                None => break patch.clone(),
            }
        };
        self.bisections += 1;
        if self.bisections > self.cap {
            return Err(Error::RefinementCap(self.cap));
        }
        let z = self.vertices.len();
        self.vertices.push(geometry::midpoint(&self.vertices[edge.0], &self.vertices[edge.1]));
        self.vertex_parents.push(Some([edge.0, edge.1]));
        for t in patch {
            self.split(t, z);
        }
        Ok(())
    }

    fn split(&mut self, idx: usize, z: usize) {
        let el = self.elems[idx];
        let d = self.dim;
        let k = el.tag as usize;
        let v = el.vertices;
        let next_tag = if k > 1 { k - 1 } else { d } as u8;
        let mut first = v;
        first[k] = z;
        let mut second = [0; 4];
        second[..k].copy_from_slice(&v[1..=k]);
        second[k] = z;
        second[k + 1..=d].copy_from_slice(&v[k + 1..=d]);
        self.retire(idx);
        for verts in [first, second] {
            self.push(Simplex { vertices: verts, tag: next_tag, level: el.level + 1, parent: el.parent });
        }
    }
}

/// Bisect every marked element at least once, closing the refinement so the
/// result is conforming. Returns a new generation nested in `mesh`; an empty
/// marking returns `mesh` itself.
pub fn bisect(mesh: &Arc<Mesh>, marked: &[usize]) -> Result<Arc<Mesh>> {
    if let Some(&bad) = marked.iter().find(|&&e| e >= mesh.num_elements()) {
        return invalid(format!("marked element {bad} out of range (mesh has {})", mesh.num_elements()));
    }
    if marked.is_empty() {
        return Ok(Arc::clone(mesh));
    }
    let mut order = marked.to_vec();
    order.sort_unstable();
    order.dedup();
    let mut refiner = Refiner::new(mesh, 100 * order.len());
    for &e in &order {
        refiner.refine_element(e)?;
    }
    let Refiner { dim, vertices, vertex_parents, elems, alive, .. } = refiner;
    let elements: Vec<Simplex> = elems
        .into_iter()
        .zip(alive)
        .filter_map(|(el, a)| a.then_some(el))
        .collect();
    Mesh::assemble(dim, *mesh.domain(), vertices, vertex_parents, elements, Some(mesh)).map(Arc::new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{create_box_mesh, BoxDomain};

    fn all(mesh: &Mesh) -> Vec<usize> {
        (0..mesh.num_elements()).collect()
    }

    #[test]
    fn empty_marking_is_identity() {
        let m = create_box_mesh(BoxDomain::unit(2), &[2]).unwrap();
        let r = bisect(&m, &[]).unwrap();
        assert!(Arc::ptr_eq(&m, &r));
    }

    #[test]
    fn single_triangle_bisection() {
        let m = Mesh::from_simplices(2, vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], &[vec![0, 1, 2]]).unwrap();
        let r = bisect(&m, &[0]).unwrap();
        assert_eq!(r.num_elements(), 2);
        assert_eq!(r.num_vertices(), 4);
        assert_eq!(r.vertices()[3], [0.5, 0.5, 0.0]);
        for el in r.elements() {
            assert!(el.vertices(2).contains(&3));
            assert_eq!(el.parent, Some(0));
        }
        assert!((r.total_volume() - 0.5).abs() < 1e-15);
        assert!(r.descends_from(&m));
        assert!(!m.descends_from(&r));
    }

    #[test]
    fn out_of_range_mark() {
        let m = create_box_mesh(BoxDomain::unit(2), &[1]).unwrap();
        assert!(matches!(bisect(&m, &[2]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn uniform_rounds_keep_shape_regular_2d() {
        let mut m = create_box_mesh(BoxDomain::unit(2), &[1]).unwrap();
        let initial = m.shape_regularity();
        for _ in 0..10 {
            m = bisect(&m, &all(&m)).unwrap();
            assert!(m.is_conforming());
            assert!(m.shape_regularity() <= 2.0 * initial + 1e-12);
            assert!((m.total_volume() - 1.0).abs() < 1e-12);
        }
        assert_eq!(m.num_elements(), 2 << 10);
    }

    #[test]
    fn uniform_rounds_keep_shape_regular_3d() {
        let mut m = create_box_mesh(BoxDomain::unit(3), &[1]).unwrap();
        let initial = m.shape_regularity();
        let mut seen: Vec<f64> = Vec::new();
        for _ in 0..6 {
            m = bisect(&m, &all(&m)).unwrap();
            assert!(m.is_conforming());
            let q = m.shape_regularity();
            assert!(q <= 2.0 * initial);
            if !seen.iter().any(|s| (s - q).abs() < 1e-9) {
                seen.push(q);
            }
            assert!((m.total_volume() - 1.0).abs() < 1e-12);
        }
        // three bisection levels halve every Kuhn tet into similar copies
        assert_eq!(m.num_elements(), 6 << 6);
        assert!(seen.len() <= 3);
    }

    #[test]
    fn local_refinement_closure_conforms() {
        let mut m = create_box_mesh(BoxDomain::unit(3), &[2]).unwrap();
        for _ in 0..8 {
            let target = m.locate_point(&[0.0, 0.0, 0.0]).unwrap();
            m = bisect(&m, &[target]).unwrap();
            assert!(m.is_conforming());
            assert!((m.total_volume() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn children_nest_in_parents() {
        let coarse = create_box_mesh(BoxDomain::unit(2), &[2]).unwrap();
        let fine = bisect(&coarse, &[0, 3, 5]).unwrap();
        for (c, el) in fine.elements().iter().enumerate() {
            let parent = el.parent.unwrap();
            let pts = coarse.element_points(parent);
            let x = fine.element_barycenter(c);
            let l = geometry::barycentric(&pts, 2, &x);
            assert!(l[..3].iter().all(|&v| v > 0.0));
        }
    }
}
