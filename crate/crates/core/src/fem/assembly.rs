//! Element-by-element assembly of P1 stiffness and mass matrices.
//!
//! Local matrices are computed in parallel and merged in element order, so
//! the result does not depend on the thread count.

use rayon::prelude::*;

use super::fields::{check_spd, Diffusion, ElementField, ElementPoint};
use super::quadrature::Quadrature;
use super::space::{sparsity, FeSpace};
use crate::error::{Error, Result};
use crate::linalg::SparseOperator;
use crate::mesh::{geometry, Mesh};
use crate::Point;

type Local = [[f64; 4]; 4];

/// Quadrature choice for a reaction/potential field.
pub(crate) struct FieldRule {
    regular: Quadrature,
    singular: Option<(Quadrature, Vec<Point>)>,
}

impl FieldRule {
    pub(crate) fn for_field(dim: usize, field: &dyn ElementField) -> Self {
        let points = field.singular_points();
        if points.is_empty() {
            Self { regular: Quadrature::order2(dim), singular: None }
        } else {
            let rule = Quadrature::order5(dim);
            let refined = rule.subdivided(dim, 2);
            Self { regular: rule, singular: Some((refined, points)) }
        }
    }

    pub(crate) fn rule(&self, mesh: &Mesh, e: usize) -> &Quadrature {
        match &self.singular {
            Some((refined, points)) => {
                let dim = mesh.dim();
                let pts = mesh.element_points(e);
                let hit = points.iter().any(|p| {
                    let l = geometry::barycentric(&pts, dim, p);
                    l[..=dim].iter().all(|&v| v >= -1e-10)
                });
                if hit {
                    refined
                } else {
                    &self.regular
                }
            }
            None => &self.regular,
        }
    }
}

fn check_lineage(space: &FeSpace, field: &dyn ElementField) -> Result<()> {
    match field.mesh_id() {
        Some(id) if id != space.mesh().id() => Err(Error::Lineage(format!(
            "field is tied to mesh {id}, space to mesh {}",
            space.mesh().id()
        ))),
        _ => Ok(()),
    }
}

/// P1 local stiffness `(A grad phi_j, grad phi_i)` with the diffusion tensor
/// sampled by a degree-2 rule (exact for constant `A`).
pub fn local_stiffness(pts: &[Point], dim: usize, diffusion: &Diffusion) -> Result<Local, String> {
    let grads = geometry::barycentric_gradients(pts, dim);
    let vol = geometry::volume(pts, dim);
    let mut out = [[0.0; 4]; 4];
    let samples: Vec<(f64, Point)> = match diffusion {
        Diffusion::Scalar(_) => vec![(1.0, geometry::from_barycentric(pts, dim, &[1.0 / (dim + 1) as f64; 4]))],
        Diffusion::Field(_) => {
            let q = Quadrature::order2(dim);
            q.points
                .iter()
                .zip(&q.weights)
                .map(|(b, w)| (*w, geometry::from_barycentric(pts, dim, b)))
                .collect()
        }
    };
    for (w, x) in samples {
        let a = diffusion.at(&x);
        check_spd(&a, dim)?;
        for i in 0..=dim {
            let mut ag = [0.0; 3];
            for r in 0..3 {
                for c in 0..3 {
                    ag[r] += a[r][c] * grads[i][c];
                }
            }
            for j in 0..=dim {
                out[i][j] += w * vol * geometry::dot(&ag, &grads[j]);
            }
        }
    }
    Ok(out)
}

/// P1 local mass `(|T| / ((d+1)(d+2))) (1 + delta_ij)`.
pub fn local_mass(pts: &[Point], dim: usize) -> Local {
    let vol = geometry::volume(pts, dim);
    let base = vol / ((dim + 1) * (dim + 2)) as f64;
    let mut out = [[0.0; 4]; 4];
    for (i, row) in out.iter_mut().enumerate().take(dim + 1) {
        for (j, v) in row.iter_mut().enumerate().take(dim + 1) {
            *v = if i == j { 2.0 * base } else { base };
        }
    }
    out
}

fn local_weighted(mesh: &Mesh, e: usize, field: &dyn ElementField, rules: &FieldRule) -> Result<Local> {
    let dim = mesh.dim();
    let pts = mesh.element_points(e);
    let vol = geometry::volume(&pts[..=dim], dim);
    let rule = rules.rule(mesh, e);
    let mut out = [[0.0; 4]; 4];
    for (b, w) in rule.points.iter().zip(&rule.weights) {
        let x = geometry::from_barycentric(&pts, dim, b);
        let value = field.value(&ElementPoint { mesh, element: e, bary: b, x });
        if !value.is_finite() {
            return Err(Error::Evaluation { element: e, point: x });
        }
        let s = w * vol * value;
        for i in 0..=dim {
            for j in 0..=dim {
                out[i][j] += s * b[i] * b[j];
            }
        }
    }
    Ok(out)
}

fn merge(space: &FeSpace, full: bool, locals: &[Local]) -> SparseOperator {
    let mesh = space.mesh();
    let dim = mesh.dim();
    let nv = mesh.num_vertices();
    let mut op = if full {
        let (rp, ci) = sparsity(mesh, nv, Some);
        SparseOperator::with_pattern(nv, rp, ci, true)
    } else {
        let (rp, ci) = space.pattern().clone();
        SparseOperator::with_pattern(space.dof_count(), rp, ci, true)
    };
    for (e, local) in locals.iter().enumerate() {
        let verts = mesh.elements()[e].vertices(dim);
        let idx: Vec<Option<usize>> = verts
            .iter()
            .map(|&v| if full { Some(v) } else { space.dof_of_vertex(v) })
            .collect();
        for (a, ia) in idx.iter().enumerate() {
            let Some(i) = *ia else { continue };
            for (b, ib) in idx.iter().enumerate() {
                let Some(j) = *ib else { continue };
                let k = op.position(i, j).expect("pattern covers element couplings");
                op.values_mut()[k] += local[a][b];
            }
        }
    }
    op
}

fn stiffness_locals(space: &FeSpace, diffusion: &Diffusion, reaction: &dyn ElementField) -> Result<Vec<Local>> {
    check_lineage(space, reaction)?;
    let mesh = space.mesh();
    let dim = mesh.dim();
    let rules = FieldRule::for_field(dim, reaction);
    (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let pts = mesh.element_points(e);
            let mut k = local_stiffness(&pts[..=dim], dim, diffusion)
                .map_err(|reason| Error::InvalidCoefficient { element: e, reason })?;
            let m = local_weighted(mesh, e, reaction, &rules)?;
            for i in 0..=dim {
                for j in 0..=dim {
                    k[i][j] += m[i][j];
                }
            }
            Ok(k)
        })
        .collect()
}

/// Matrix of `a(u, v) = (A grad u, grad v) + (c u, v)` over interior dofs.
pub fn assemble_stiffness(space: &FeSpace, diffusion: &Diffusion, reaction: &dyn ElementField) -> Result<SparseOperator> {
    let locals = stiffness_locals(space, diffusion, reaction)?;
    Ok(merge(space, false, &locals))
}

/// Same form over all vertices, before boundary elimination.
pub fn assemble_stiffness_full(
    space: &FeSpace,
    diffusion: &Diffusion,
    reaction: &dyn ElementField,
) -> Result<SparseOperator> {
    let locals = stiffness_locals(space, diffusion, reaction)?;
    Ok(merge(space, true, &locals))
}

fn mass_locals(space: &FeSpace) -> Vec<Local> {
    let mesh = space.mesh();
    let dim = mesh.dim();
    (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| local_mass(&mesh.element_points(e)[..=dim], dim))
        .collect()
}

/// Consistent mass matrix `(phi_j, phi_i)` over interior dofs.
pub fn assemble_mass(space: &FeSpace) -> SparseOperator {
    merge(space, false, &mass_locals(space))
}

pub fn assemble_mass_full(space: &FeSpace) -> SparseOperator {
    merge(space, true, &mass_locals(space))
}

/// `(w phi_j, phi_i)` by element quadrature: degree 2 for smooth fields,
/// degree 5 (twice subdivided on elements holding a singular point) otherwise.
pub fn assemble_weighted_mass(space: &FeSpace, w: &dyn ElementField) -> Result<SparseOperator> {
    check_lineage(space, w)?;
    let mesh = space.mesh();
    let rules = FieldRule::for_field(mesh.dim(), w);
    let locals: Vec<Local> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| local_weighted(mesh, e, w, &rules))
        .collect::<Result<_>>()?;
    Ok(merge(space, false, &locals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::fields::{Constant, FnField};
    use crate::fem::DiscreteFunction;
    use crate::mesh::{create_box_mesh, BoxDomain, Mesh};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn right_triangle() -> [Point; 3] {
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
    }

    #[test]
    fn p1_stiffness_on_unit_right_triangle() {
        let k = local_stiffness(&right_triangle(), 2, &Diffusion::identity()).unwrap();
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - expected[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn p1_mass_on_unit_right_triangle() {
        let m = local_mass(&right_triangle(), 2);
        let area = 0.5;
        for i in 0..3 {
            for j in 0..3 {
                let e = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                assert!((m[i][j] - e).abs() < 1e-16);
            }
        }
    }

    #[test]
    fn full_laplacian_rows_sum_to_zero() {
        for dim in [2, 3] {
            let m = create_box_mesh(BoxDomain::unit(dim), &[3]).unwrap();
            let m = crate::mesh::bisect(&m, &[0, 5]).unwrap();
            let space = FeSpace::new(m);
            let k = assemble_stiffness_full(&space, &Diffusion::identity(), &Constant(0.0)).unwrap();
            let ones = vec![1.0; k.dim()];
            let r = k.mul_vec(&ones);
            assert!(r.iter().all(|v| v.abs() < 1e-12));
            assert!(k.is_symmetric(1e-13));
        }
    }

    #[test]
    fn stiffness_matches_independent_quadrature() {
        // perturbed vertices so elements are generic
        let base = create_box_mesh(BoxDomain::unit(2), &[4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut verts = base.vertices().to_vec();
        for v in verts.iter_mut() {
            if v[0] > 0.0 && v[0] < 1.0 && v[1] > 0.0 && v[1] < 1.0 {
                v[0] += rng.gen_range(-0.05..0.05);
                v[1] += rng.gen_range(-0.05..0.05);
            }
        }
        let els: Vec<Vec<usize>> = base.elements().iter().map(|e| e.vertices(2).to_vec()).collect();
        let mesh = Mesh::from_simplices(2, verts, &els).unwrap();
        let space = FeSpace::new(mesh.clone());
        let k = assemble_stiffness(&space, &Diffusion::identity(), &Constant(0.0)).unwrap();

        // oracle: gradients of hat functions by finite differences of the
        // piecewise-linear interpolant, integrated with the centroid rule
        let n = space.dof_count();
        let mut dense = vec![vec![0.0; n]; n];
        for e in 0..mesh.num_elements() {
            let pts = mesh.element_points(e);
            let area = geometry::volume(&pts[..3], 2);
            let c = mesh.element_barycenter(e);
            let dofs = space.local_dofs(e);
            let mut grads = [[0.0; 2]; 3];
            for (a, g) in grads.iter_mut().enumerate() {
                let hat = |x: &Point| geometry::barycentric(&pts, 2, x)[a];
                let h = 1e-6;
                g[0] = (hat(&[c[0] + h, c[1], 0.0]) - hat(&[c[0] - h, c[1], 0.0])) / (2.0 * h);
                g[1] = (hat(&[c[0], c[1] + h, 0.0]) - hat(&[c[0], c[1] - h, 0.0])) / (2.0 * h);
            }
            for a in 0..3 {
                for b in 0..3 {
                    if let (Some(i), Some(j)) = (dofs[a], dofs[b]) {
                        dense[i][j] += area * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                assert!((k.get(i, j) - dense[i][j]).abs() < 1e-8, "({i},{j})");
            }
        }
    }

    #[test]
    fn non_spd_diffusion_rejected() {
        let m = create_box_mesh(BoxDomain::unit(2), &[2]).unwrap();
        let space = FeSpace::new(m);
        let bad = Diffusion::Field(Arc::new(|_: &Point| [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]]));
        assert!(matches!(
            assemble_stiffness(&space, &bad, &Constant(0.0)),
            Err(Error::InvalidCoefficient { .. })
        ));
        let zero = Diffusion::Scalar(0.0);
        assert!(assemble_stiffness(&space, &zero, &Constant(0.0)).is_err());
    }

    #[test]
    fn weighted_mass_consistency() {
        let m = create_box_mesh(BoxDomain::unit(3), &[3]).unwrap();
        let space = FeSpace::new(m);
        let mass = assemble_mass(&space);
        let zero = assemble_weighted_mass(&space, &Constant(0.0)).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
        let one = assemble_weighted_mass(&space, &Constant(1.0)).unwrap();
        for (a, b) in one.values().iter().zip(mass.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mass_integrates_constants() {
        for dim in [2, 3] {
            let m = create_box_mesh(BoxDomain::cube(dim, -1.0, 2.0).unwrap(), &[3]).unwrap();
            let space = FeSpace::new(m.clone());
            let full = assemble_mass_full(&space);
            let ones = vec![1.0; full.dim()];
            assert!((full.inner(&ones, &ones) - m.domain().volume()).abs() < 1e-12);
        }
    }

    #[test]
    fn two_element_mass_is_spd() {
        let verts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]];
        let m = Mesh::from_simplices(2, verts, &[vec![0, 1, 2], vec![0, 2, 3]]).unwrap();
        let space = FeSpace::new(m);
        let full = assemble_mass_full(&space).to_dense();
        let eig = nalgebra::SymmetricEigen::new(full);
        assert!(eig.eigenvalues.min() > 0.0);
    }

    #[test]
    fn coulomb_weighted_mass_matches_refined_reference() {
        let m = create_box_mesh(BoxDomain::cube(3, 0.5, 1.5).unwrap(), &[4]).unwrap();
        let space = FeSpace::new(m.clone());
        let coulomb = |x: &Point| -1.0 / geometry::norm(x);
        let field = FnField::with_singularities(coulomb, vec![[0.0; 3]]);
        let a = assemble_weighted_mass(&space, &field).unwrap();
        // reference on elements away from the origin: order-5 rule subdivided 3 times
        let reference = Quadrature::order5(3).subdivided(3, 3);
        for e in 0..m.num_elements() {
            let pts = m.element_points(e);
            let vol = geometry::volume(&pts, 3);
            let mut local = [[0.0; 4]; 4];
            for (b, w) in reference.points.iter().zip(&reference.weights) {
                let x = geometry::from_barycentric(&pts, 3, b);
                for i in 0..4 {
                    for j in 0..4 {
                        local[i][j] += w * vol * coulomb(&x) * b[i] * b[j];
                    }
                }
            }
            let ours = local_weighted(&m, e, &field, &FieldRule::for_field(3, &field)).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    assert!((ours[i][j] - local[i][j]).abs() < 1e-8, "element {e}: {} vs {}", ours[i][j], local[i][j]);
                }
            }
        }
        assert!(a.is_symmetric(1e-13));
    }

    #[test]
    fn nonfinite_field_reports_element() {
        let m = create_box_mesh(BoxDomain::cube(2, -1.0, 1.0).unwrap(), &[2]).unwrap();
        let space = FeSpace::new(m);
        let bad = FnField::new(|x: &Point| if x[0] > 0.0 { f64::NAN } else { 0.0 });
        assert!(matches!(assemble_weighted_mass(&space, &bad), Err(Error::Evaluation { .. })));
    }

    #[test]
    fn discrete_field_lineage_checked() {
        let a = create_box_mesh(BoxDomain::unit(2), &[2]).unwrap();
        let b = create_box_mesh(BoxDomain::unit(2), &[2]).unwrap();
        let f = DiscreteFunction::zeros(FeSpace::new(a));
        assert!(matches!(
            assemble_weighted_mass(&FeSpace::new(b), &f),
            Err(Error::Lineage(_))
        ));
    }
}
