use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};

use super::steps::{operators_for, rayleigh_ritz, source_solve_step, SolveOptions};
use super::OrbitalSet;
use crate::error::{invalid, Result};
use crate::fem::{assemble_stiffness, Constant, Diffusion, FeSpace};
use crate::linalg::{b_orthonormalize, baseline_geneig, dot, SparseOperator};
use crate::mesh::Mesh;
use crate::model::SingleParticleForm;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeResult {
    pub epsilon: f64,
    /// `sum_k |lambda_k - lambda_k^0| + ||u_k - u_k^0||_1 + ||u_k - u_k^0||_0`
    pub input_error: f64,
    /// `max_i dist_{H^1}(u_i^1, V)` after one iteration.
    pub d1: f64,
}

fn h1_norm(h: &SparseOperator, x: &[f64]) -> f64 {
    h.inner(x, x).max(0.0).sqrt()
}

/// Distance in the `h`-norm from `x` to the span of `basis`.
fn distance_to_span(h: &SparseOperator, basis: &[Vec<f64>], x: &[f64]) -> f64 {
    let hb: Vec<Vec<f64>> = basis.iter().map(|b| h.mul_vec(b)).collect();
    let k = basis.len();
    let g = DMatrix::from_fn(k, k, |i, j| dot(&basis[i], &hb[j]));
    let r = DVector::from_fn(k, |i, _| dot(&hb[i], x));
    let c = g.cholesky().expect("reference basis is independent").solve(&r);
    let mut e = x.to_vec();
    for (ci, b) in c.iter().zip(basis) {
        crate::linalg::axpy(-ci, b, &mut e);
    }
    h1_norm(h, &e)
}

/// Perturb the lowest `count` reference eigenpairs on `mesh` by `epsilon`,
/// run one orbital-updating iteration on the same mesh and measure how far
/// the output lies from the reference eigenspace.
pub fn theorem_a1_probe(
    problem: &dyn SingleParticleForm,
    mesh: Arc<Mesh>,
    count: usize,
    epsilon: f64,
    seed: u64,
    cg_tol: f64,
) -> Result<ProbeResult> {
    if !(epsilon >= 0.0) {
        return invalid("perturbation must be nonnegative");
    }
    let space = FeSpace::new(mesh);
    let ops = operators_for(problem, &space)?;
    let h = assemble_stiffness(&space, &Diffusion::identity(), &Constant(0.0))?.add_scaled(&ops.b, 1.0)?;
    let reference = baseline_geneig(&ops.a, &ops.b, count)?;
    let n = space.dof_count();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    let mut perturbed = Vec::with_capacity(count);
    let mut lambdas = Vec::with_capacity(count);
    for (u, lambda) in reference.vectors.iter().zip(&reference.values) {
        let noise: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scale = ops.b.inner(&noise, &noise).sqrt();
        let mut v: Vec<f64> = u.iter().zip(&noise).map(|(a, z)| a + epsilon * z / scale).collect();
        let nv = ops.b.inner(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= nv);
        perturbed.push(v);
        lambdas.push(lambda * (1.0 + epsilon * rng.gen_range(-1.0..1.0)));
    }
    let basis = b_orthonormalize(&perturbed, &ops.b, 0.0)?;
    let mut pairs: Vec<(f64, Vec<f64>)> = lambdas.into_iter().zip(basis.vectors).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut input_error = 0.0;
    for ((l0, u0), (l, u)) in pairs.iter().zip(reference.values.iter().zip(&reference.vectors)) {
        let d: Vec<f64> = u.iter().zip(u0).map(|(a, b)| a - b).collect();
        input_error += (l - l0).abs() + h1_norm(&h, &d) + ops.b.inner(&d, &d).sqrt();
    }
    let (values, vectors): (Vec<f64>, Vec<Vec<f64>>) = pairs.into_iter().unzip();
    let start = OrbitalSet::new(space.clone(), vectors, values, &ops.b)?;

    let opts = SolveOptions { tol: cg_tol, max_iter: 50 * n.max(100), ..Default::default() };
    let candidates = source_solve_step(&start, &ops, &opts)?;
    let next = rayleigh_ritz(&candidates, &ops.a, &ops.b, count, 0.0)?;
    let d1 = next
        .orbitals()
        .iter()
        .map(|u| distance_to_span(&h, &reference.vectors, u.coefficients()))
        .fold(0.0, f64::max);
    Ok(ProbeResult { epsilon, input_error, d1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{create_box_mesh, BoxDomain};
    use crate::model::LinearProblem;

    #[test]
    fn unperturbed_input_is_a_fixed_point() {
        let p = LinearProblem::laplace(BoxDomain::unit(2));
        let mesh = create_box_mesh(BoxDomain::unit(2), &[12]).unwrap();
        let r = theorem_a1_probe(&p, mesh, 3, 0.0, 1, 1e-12).unwrap();
        assert!(r.d1 <= 1e-10, "d1 = {}", r.d1);
        assert!(r.input_error < 1e-10);
    }

    #[test]
    fn halving_epsilon_shrinks_d1() {
        let p = LinearProblem::laplace(BoxDomain::unit(2));
        let mesh = create_box_mesh(BoxDomain::unit(2), &[12]).unwrap();
        let a = theorem_a1_probe(&p, mesh.clone(), 3, 1e-3, 1, 1e-13).unwrap();
        let b = theorem_a1_probe(&p, mesh, 3, 5e-4, 1, 1e-13).unwrap();
        assert!(a.d1 / b.d1 >= 1.5, "{} vs {}", a.d1, b.d1);
    }
}
