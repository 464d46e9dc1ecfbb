use std::fmt::Write as _;
use std::sync::{Arc, OnceLock};

use crate::error::{invalid, Error, Result};
use crate::mesh::{geometry, Mesh};
use crate::Point;

/// Continuous piecewise-linear functions on a mesh vanishing on the box
/// boundary. Degrees of freedom are the interior vertices, numbered in
/// increasing vertex order.
#[derive(Debug)]
pub struct FeSpace {
    mesh: Arc<Mesh>,
    degree: usize,
    dof_of_vertex: Vec<Option<usize>>,
    vertex_of_dof: Vec<usize>,
    pattern: OnceLock<(Vec<usize>, Vec<usize>)>,
}

impl FeSpace {
    pub fn new(mesh: Arc<Mesh>) -> Arc<Self> {
        Self::with_degree(mesh, 1).expect("degree 1 is always available")
    }

    pub fn with_degree(mesh: Arc<Mesh>, degree: usize) -> Result<Arc<Self>> {
        if degree != 1 {
            return invalid(format!("polynomial degree {degree} is not available, only 1"));
        }
        let domain = *mesh.domain();
        let mut dof_of_vertex = Vec::with_capacity(mesh.num_vertices());
        let mut vertex_of_dof = Vec::new();
        for (v, x) in mesh.vertices().iter().enumerate() {
            if domain.on_boundary(x) {
                dof_of_vertex.push(None);
            } else {
                dof_of_vertex.push(Some(vertex_of_dof.len()));
                vertex_of_dof.push(v);
            }
        }
        Ok(Arc::new(Self { mesh, degree, dof_of_vertex, vertex_of_dof, pattern: OnceLock::new() }))
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dof_count(&self) -> usize {
        self.vertex_of_dof.len()
    }

    pub fn dof_of_vertex(&self, v: usize) -> Option<usize> {
        self.dof_of_vertex[v]
    }

    pub fn vertex_of_dof(&self, dof: usize) -> usize {
        self.vertex_of_dof[dof]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.dof_of_vertex[v].is_none()
    }

    /// Local-to-global map of element `e`; boundary vertices map to `None`.
    pub fn local_dofs(&self, e: usize) -> [Option<usize>; 4] {
        let mut out = [None; 4];
        let dim = self.mesh.dim();
        for (slot, &v) in out.iter_mut().zip(self.mesh.elements()[e].vertices(dim)) {
            *slot = self.dof_of_vertex[v];
        }
        out
    }

    /// CSR sparsity of the interior-dof graph (rows sorted, unique).
    pub(crate) fn pattern(&self) -> &(Vec<usize>, Vec<usize>) {
        self.pattern
            .get_or_init(|| sparsity(&self.mesh, self.dof_count(), |v| self.dof_of_vertex[v]))
    }

    pub fn check_same_mesh(&self, other: &FeSpace) -> Result<()> {
        if self.mesh.id() != other.mesh.id() {
            return Err(Error::Lineage(format!(
                "function lives on mesh generation {} (id {}), space on generation {} (id {})",
                other.mesh.generation(),
                other.mesh.id(),
                self.mesh.generation(),
                self.mesh.id()
            )));
        }
        Ok(())
    }
}

pub(crate) fn sparsity(mesh: &Mesh, n: usize, index: impl Fn(usize) -> Option<usize>) -> (Vec<usize>, Vec<usize>) {
    let dim = mesh.dim();
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    for el in mesh.elements() {
        let verts = el.vertices(dim);
        for &a in verts {
            if let Some(i) = index(a) {
                for &b in verts {
                    if let Some(j) = index(b) {
                        rows[i].push(j);
                    }
                }
            }
        }
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    row_ptr.push(0);
    for mut r in rows {
        r.sort_unstable();
        r.dedup();
        col_idx.extend_from_slice(&r);
        row_ptr.push(col_idx.len());
    }
    (row_ptr, col_idx)
}

/// Coefficient vector over a space.
#[derive(Debug, Clone)]
pub struct DiscreteFunction {
    space: Arc<FeSpace>,
    coefficients: Vec<f64>,
}

impl DiscreteFunction {
    pub fn new(space: Arc<FeSpace>, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != space.dof_count() {
            return invalid(format!(
                "coefficient vector has length {}, space has {} dofs",
                coefficients.len(),
                space.dof_count()
            ));
        }
        Ok(Self { space, coefficients })
    }

    pub fn zeros(space: Arc<FeSpace>) -> Self {
        let n = space.dof_count();
        Self { space, coefficients: vec![0.0; n] }
    }

    /// Nodal interpolant at the interior vertices.
    pub fn interpolate(space: Arc<FeSpace>, f: impl Fn(&Point) -> f64) -> Self {
        let mesh = space.mesh();
        let coefficients = (0..space.dof_count())
            .map(|d| f(&mesh.vertices()[space.vertex_of_dof(d)]))
            .collect();
        Self { space, coefficients }
    }

    /// Function with the given value at every vertex; boundary entries are ignored.
    pub fn from_nodal(space: Arc<FeSpace>, nodal: &[f64]) -> Result<Self> {
        if nodal.len() != space.mesh().num_vertices() {
            return invalid("nodal vector length differs from the vertex count");
        }
        let coefficients = (0..space.dof_count()).map(|d| nodal[space.vertex_of_dof(d)]).collect();
        Ok(Self { space, coefficients })
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.space.mesh()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coefficients
    }

    /// Values at every mesh vertex, zero on the boundary.
    pub fn nodal_values(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.mesh().num_vertices()];
        for (d, c) in self.coefficients.iter().enumerate() {
            out[self.space.vertex_of_dof(d)] = *c;
        }
        out
    }

    pub(crate) fn vertex_value(&self, v: usize) -> f64 {
        self.space.dof_of_vertex(v).map_or(0.0, |d| self.coefficients[d])
    }

    pub fn value_in_element(&self, e: usize, bary: &[f64; 4]) -> f64 {
        let dim = self.mesh().dim();
        self.mesh().elements()[e]
            .vertices(dim)
            .iter()
            .zip(bary)
            .map(|(&v, l)| l * self.vertex_value(v))
            .sum()
    }

    /// Constant gradient on element `e`.
    pub fn gradient_in_element(&self, e: usize) -> Point {
        let mesh = self.mesh();
        let dim = mesh.dim();
        let pts = mesh.element_points(e);
        let grads = geometry::barycentric_gradients(&pts, dim);
        let mut g = [0.0; 3];
        for (i, &v) in mesh.elements()[e].vertices(dim).iter().enumerate() {
            let c = self.vertex_value(v);
            for k in 0..3 {
                g[k] += c * grads[i][k];
            }
        }
        g
    }

    /// Exact integral of the piecewise-linear function over the domain.
    pub fn integral(&self) -> f64 {
        let mesh = self.mesh();
        let dim = mesh.dim();
        let mut total = 0.0;
        for (e, el) in mesh.elements().iter().enumerate() {
            let s: f64 = el.vertices(dim).iter().map(|&v| self.vertex_value(v)).sum();
            total += mesh.element_volume(e) * s / (dim + 1) as f64;
        }
        total
    }

    /// Barycentric interpolation in the lowest-index element containing `x`.
    pub fn evaluate(&self, x: &Point) -> Result<f64> {
        let mesh = self.mesh();
        let e = mesh.locate_point(x).ok_or(Error::OutOfDomain(*x))?;
        let pts = mesh.element_points(e);
        let bary = geometry::barycentric(&pts, mesh.dim(), x);
        Ok(self.value_in_element(e, &bary))
    }

    /// Exact embedding into a space on a refinement of this function's mesh.
    pub fn prolongate(&self, target: &Arc<FeSpace>) -> Result<DiscreteFunction> {
        let source = self.mesh();
        let fine = target.mesh();
        if !fine.descends_from(source) {
            return Err(Error::Lineage(format!(
                "target mesh (generation {}) does not descend from source mesh (generation {})",
                fine.generation(),
                source.generation()
            )));
        }
        if Arc::ptr_eq(&self.space, target) || fine.id() == source.id() {
            return DiscreteFunction::new(Arc::clone(target), self.coefficients.clone());
        }
        let mut nodal = self.nodal_values();
        nodal.reserve(fine.num_vertices() - nodal.len());
        for v in source.num_vertices()..fine.num_vertices() {
            let [a, b] = fine.vertex_parents()[v].expect("refinement vertices record their edge");
            nodal.push(0.5 * (nodal[a] + nodal[b]));
        }
        DiscreteFunction::from_nodal(Arc::clone(target), &nodal)
    }

    /// `generation dof_count` header followed by one coefficient per line.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(24 * (self.coefficients.len() + 1));
        let _ = writeln!(out, "{} {}", self.mesh().generation(), self.coefficients.len());
        for c in &self.coefficients {
            let _ = writeln!(out, "{c:e}");
        }
        out
    }

    /// Read coefficients written by [`DiscreteFunction::to_text`] into `space`.
    pub fn from_text(space: Arc<FeSpace>, text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::Parse { line: 1, message: "empty input".into() })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let count: usize = fields
            .get(1)
            .and_then(|t| t.parse().ok())
            .ok_or(Error::Parse { line: 1, message: "header must be `generation dof_count`".into() })?;
        let mut coefficients = Vec::with_capacity(count);
        for (i, l) in lines.enumerate().take(count) {
            coefficients.push(
                l.trim()
                    .parse()
                    .map_err(|_| Error::Parse { line: i + 2, message: format!("bad coefficient `{l}`") })?,
            );
        }
        Self::new(space, coefficients)
    }

    /// Legacy-VTK ASCII unstructured grid with vertex values.
    pub fn to_vtk(&self, name: &str) -> String {
        let mesh = self.mesh();
        let dim = mesh.dim();
        let mut out = String::new();
        let _ = writeln!(out, "# vtk DataFile Version 3.0\n{name}\nASCII\nDATASET UNSTRUCTURED_GRID");
        let _ = writeln!(out, "POINTS {} double", mesh.num_vertices());
        for v in mesh.vertices() {
            let _ = writeln!(out, "{:e} {:e} {:e}", v[0], v[1], v[2]);
        }
        let ne = mesh.num_elements();
        let _ = writeln!(out, "CELLS {} {}", ne, ne * (dim + 2));
        for el in mesh.elements() {
            let idx: Vec<String> = el.vertices(dim).iter().map(|i| i.to_string()).collect();
            let _ = writeln!(out, "{} {}", dim + 1, idx.join(" "));
        }
        let _ = writeln!(out, "CELL_TYPES {ne}");
        let cell_type = if dim == 2 { 5 } else { 10 };
        for _ in 0..ne {
            let _ = writeln!(out, "{cell_type}");
        }
        let _ = writeln!(out, "POINT_DATA {}\nSCALARS {name} double 1\nLOOKUP_TABLE default", mesh.num_vertices());
        for v in self.nodal_values() {
            let _ = writeln!(out, "{v:e}");
        }
        out
    }
}
