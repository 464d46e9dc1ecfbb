//! Residual error indicators and the Mark step.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::fem::{Diffusion, DiscreteFunction, ElementField, ElementPoint, FieldRule, SumField};
use crate::mesh::{geometry, Mesh};
use crate::Point;

/// Per-element nonnegative error indicators on one mesh generation.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorIndicators {
    values: Vec<f64>,
    mesh_id: u64,
    generation: u32,
    total: f64,
}

impl ErrorIndicators {
    pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        Self::from_parts(mesh.id(), mesh.generation(), values, mesh.num_elements())
    }

    fn from_parts(mesh_id: u64, generation: u32, values: Vec<f64>, expected: usize) -> Result<Self> {
        if values.len() != expected {
            return invalid(format!("{} indicators for {expected} elements", values.len()));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return invalid(format!("indicator {v} is not a finite nonnegative number"));
        }
        let total = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(Self { values, mesh_id, generation, total })
    }

    /// Element-wise maximum over several indicator sets on the same mesh.
    pub fn elementwise_max(sets: &[ErrorIndicators]) -> Result<Self> {
        let first = sets.first().ok_or_else(|| Error::InvalidArgument("no indicator sets".into()))?;
        if sets.iter().any(|s| s.mesh_id != first.mesh_id) {
            return Err(Error::Lineage("indicator sets live on different meshes".into()));
        }
        let values = (0..first.len()).map(|e| sets.iter().map(|s| s.values[e]).fold(0.0, f64::max)).collect();
        Self::from_parts(first.mesh_id, first.generation, values, first.len())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `sqrt(sum eta^2)`
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("element,eta\n");
        for (e, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{e},{v:e}");
        }
        out
    }
}

/// Residual estimator for `-div(A grad u) + c u = f`:
/// `eta^2 = h^2 |f - c u_h|^2_T + 1/2 sum_F h_F |[A grad u_h . n]|^2_F`.
///
/// The element term drops `div(A grad u_h)`, which vanishes for P1 functions
/// whenever `A` is constant on each element.
pub fn estimate_source_residual(
    solution: &DiscreteFunction,
    rhs: &dyn ElementField,
    diffusion: &Diffusion,
    reaction: &dyn ElementField,
) -> Result<ErrorIndicators> {
    let mesh = solution.mesh();
    for f in [rhs, reaction] {
        if let Some(id) = f.mesh_id() {
            if id != mesh.id() {
                return Err(Error::Lineage(format!("field on mesh {id}, solution on mesh {}", mesh.id())));
            }
        }
    }
    let dim = mesh.dim();
    let combined = SumField(vec![rhs, reaction]);
    let rules = FieldRule::for_field(dim, &combined);
    let interior: Vec<f64> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let pts = mesh.element_points(e);
            let vol = geometry::volume(&pts[..=dim], dim);
            let h = mesh.element_diameter(e);
            let mut sq = 0.0;
            for (b, w) in rules.rule(mesh, e).points.iter().zip(&rules.rule(mesh, e).weights) {
                let x = geometry::from_barycentric(&pts[..=dim], dim, b);
                let at = ElementPoint { mesh, element: e, bary: b, x };
                let r = rhs.value(&at) - reaction.value(&at) * solution.value_in_element(e, b);
                sq += w * r * r;
            }
            h * h * vol * sq
        })
        .collect();
    if let Some(e) = interior.iter().position(|v| !v.is_finite()) {
        return Err(Error::Evaluation { element: e, point: mesh.element_barycenter(e) });
    }

    let fluxes: Vec<Point> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let g = solution.gradient_in_element(e);
            let a = diffusion.at(&mesh.element_barycenter(e));
            let mut f = [0.0; 3];
            for (i, fi) in f.iter_mut().enumerate() {
                *fi = (0..3).map(|j| a[i][j] * g[j]).sum();
            }
            f
        })
        .collect();
    let mut eta2 = interior;
    for face in mesh.interior_faces() {
        let v = &face.vertices[..dim];
        let p: Vec<Point> = v.iter().map(|&i| mesh.vertices()[i]).collect();
        let (normal, measure, h_f) = if dim == 2 {
            let t = geometry::sub(&p[1], &p[0]);
            let len = geometry::norm(&t);
            ([-t[1] / len, t[0] / len, 0.0], len, len)
        } else {
            let c = geometry::cross(&geometry::sub(&p[1], &p[0]), &geometry::sub(&p[2], &p[0]));
            let n = geometry::norm(&c);
            ([c[0] / n, c[1] / n, c[2] / n], 0.5 * n, geometry::diameter(&p))
        };
        let [a, b] = face.owners;
        let jump = geometry::dot(&geometry::sub(&fluxes[a], &fluxes[b]), &normal);
        let share = 0.5 * 0.5 * h_f * jump * jump * measure;
        eta2[a] += share;
        eta2[b] += share;
    }
    ErrorIndicators::new(mesh, eta2.into_iter().map(f64::sqrt).collect())
}

/// Outcome of a marking strategy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Marked {
    /// Ascending element indices.
    pub elements: Vec<usize>,
    /// Every indicator is zero; nothing left to refine.
    pub converged: bool,
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        invalid(format!("marking parameter {theta} must lie in (0, 1)"))
    }
}

/// Smallest greedy prefix (largest eta first, ties by lower index) with
/// `sum_M eta^2 >= theta * sum eta^2`.
pub fn dorfler_mark(indicators: &ErrorIndicators, theta: f64) -> Result<Marked> {
    check_theta(theta)?;
    let eta = indicators.values();
    let total: f64 = eta.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Ok(Marked { elements: Vec::new(), converged: true });
    }
    let mut order: Vec<usize> = (0..eta.len()).collect();
    order.sort_by(|&i, &j| eta[j].total_cmp(&eta[i]).then(i.cmp(&j)));
    let mut sum = 0.0;
    let mut elements = Vec::new();
    for i in order {
        if sum >= theta * total {
            break;
        }
        sum += eta[i] * eta[i];
        elements.push(i);
    }
    elements.sort_unstable();
    Ok(Marked { elements, converged: false })
}

/// All elements with `eta >= theta * max eta`.
pub fn maximum_mark(indicators: &ErrorIndicators, theta: f64) -> Result<Marked> {
    check_theta(theta)?;
    let eta = indicators.values();
    let max = eta.iter().fold(0.0_f64, |m, v| m.max(*v));
    if max == 0.0 {
        return Ok(Marked { elements: Vec::new(), converged: true });
    }
    let elements = (0..eta.len()).filter(|&i| eta[i] >= theta * max).collect();
    Ok(Marked { elements, converged: false })
}
