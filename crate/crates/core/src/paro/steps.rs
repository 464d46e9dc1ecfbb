use std::sync::Arc;

use log::{debug, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;

use super::OrbitalSet;
use crate::error::{invalid, Error, Result};
use crate::fem::{assemble_mass, assemble_stiffness, multigrid_for, DiscreteFunction, FeSpace};
use crate::linalg::{
    b_orthonormalize, baseline_geneig, cg_solve_from, dense_sym_geneig, dot, DenseSymPencil, Orthonormalized,
    Preconditioner, SparseOperator,
};
use crate::model::SingleParticleForm;

/// Stiffness (`a`) and mass (`b`) matrices of one space.
#[derive(Debug, Clone)]
pub struct Operators {
    pub space: Arc<FeSpace>,
    pub a: SparseOperator,
    pub b: SparseOperator,
}

/// Assemble `a(u, v) = (A grad u, grad v) + (V u, v)` and the mass matrix.
pub fn operators_for(form: &dyn SingleParticleForm, space: &Arc<FeSpace>) -> Result<Operators> {
    let a = assemble_stiffness(space, form.diffusion(), form.potential())?;
    let b = assemble_mass(space);
    Ok(Operators { space: space.clone(), a, b })
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Run the per-orbital solves on the rayon pool.
    pub parallel: bool,
    /// Precondition with a V-cycle over the mesh lineage instead of the diagonal.
    pub multigrid: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 20_000, parallel: true, multigrid: true }
    }
}

/// Lowest `count` eigenpairs on the (coarse) space of `ops`.
pub fn initial_guess(ops: &Operators, count: usize) -> Result<OrbitalSet> {
    let n = ops.space.dof_count();
    if count == 0 || count > n {
        return invalid(format!("{count} initial orbitals requested on a space with {n} dofs"));
    }
    let pairs = baseline_geneig(&ops.a, &ops.b, count)?;
    let basis = b_orthonormalize(&pairs.vectors, &ops.b, 0.0)?;
    OrbitalSet::new(ops.space.clone(), basis.vectors, pairs.values, &ops.b)
}

/// Positive shift making `A + sigma B` definite given eigenvalue estimates.
pub(crate) fn shift_for(eigenvalues: &[f64]) -> f64 {
    let lmin = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    (-lmin + 0.5).max(0.0)
}

/// Step 3: for each orbital solve `(A + sigma B) w = (lambda_i + sigma) B u_i`,
/// warm-started from `u_i`. Orbitals on a coarser generation are prolongated first.
pub fn source_solve_step(orbitals: &OrbitalSet, ops: &Operators, opts: &SolveOptions) -> Result<Vec<DiscreteFunction>> {
    let orbitals = if orbitals.space().mesh().id() == ops.space.mesh().id() {
        orbitals.clone()
    } else {
        orbitals.prolongate(&ops.space)?
    };
    let mut sigma = shift_for(orbitals.eigenvalues());
    for attempt in 0..6 {
        match solve_shifted(&orbitals, ops, sigma, opts) {
            Err(Error::NotSpd { iteration, curvature }) if attempt < 5 => {
                warn!("shifted operator indefinite (curvature {curvature:e} at CG iteration {iteration}); raising shift {sigma}");
                sigma = 2.0 * sigma + 1.0;
            }
            other => return other,
        }
    }
    unreachable!("loop returns on the last attempt")
}

fn solve_shifted(orbitals: &OrbitalSet, ops: &Operators, sigma: f64, opts: &SolveOptions) -> Result<Vec<DiscreteFunction>> {
    let shifted;
    let op = if sigma > 0.0 {
        shifted = ops.a.add_scaled(&ops.b, sigma)?;
        &shifted
    } else {
        &ops.a
    };
    let mg = if opts.multigrid {
        match multigrid_for(&ops.space, op.clone()) {
            Ok(mg) => Some(mg),
            // the coarse factorization fails exactly when the coarse operator is indefinite
            Err(Error::Pencil(_)) => return Err(Error::NotSpd { iteration: 0, curvature: f64::NAN }),
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let precond = mg.as_ref().map_or(Preconditioner::Jacobi, Preconditioner::Multigrid);
    let solve = |(u, lambda): (&DiscreteFunction, &f64)| -> Result<Vec<f64>> {
        let mut rhs = ops.b.mul_vec(u.coefficients());
        rhs.iter_mut().for_each(|x| *x *= lambda + sigma);
        let x0 = Some(u.coefficients());
        match cg_solve_from(op, &rhs, x0, opts.tol, opts.max_iter, precond) {
            Ok(s) => {
                debug!("source solve: {} CG iterations, residual {:e}", s.iterations, s.residual);
                Ok(s.x)
            }
            Err(Error::IterationLimit { residual, .. }) => {
                warn!("CG stopped at residual {residual:e}; retrying with tolerance {:e}", opts.tol * 10.0);
                cg_solve_from(op, &rhs, x0, opts.tol * 10.0, opts.max_iter, precond).map(|s| s.x)
            }
            Err(e) => Err(e),
        }
    };
    let pairs: Vec<_> = orbitals.orbitals().iter().zip(orbitals.eigenvalues()).collect();
    let results: Vec<Result<Vec<f64>>> = if opts.parallel {
        pairs.into_par_iter().map(solve).collect()
    } else {
        pairs.into_iter().map(solve).collect()
    };
    let mut out = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(x) => out.push(DiscreteFunction::new(ops.space.clone(), x)?),
            Err(e) => failures.push((i, e)),
        }
    }
    if let Some((i, e)) = failures.into_iter().next() {
        warn!("source solve for orbital {i} failed");
        return Err(e);
    }
    Ok(out)
}

/// Project onto an already `B`-orthonormal basis and lift all Ritz pairs back.
pub(crate) fn project(basis: &Orthonormalized, space: &Arc<FeSpace>, a: &SparseOperator, b: &SparseOperator) -> Result<OrbitalSet> {
    let v = &basis.vectors;
    let k = v.len();
    let av: Vec<Vec<f64>> = v.iter().map(|x| a.mul_vec(x)).collect();
    let bv: Vec<Vec<f64>> = v.iter().map(|x| b.mul_vec(x)).collect();
    let at = DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(&v[i], &av[j]) + dot(&v[j], &av[i])));
    let bt = DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(&v[i], &bv[j]) + dot(&v[j], &bv[i])));
    let pairs = dense_sym_geneig(&DenseSymPencil::new(at, bt)?)?;
    let n = space.dof_count();
    let lifted: Vec<Vec<f64>> = pairs
        .vectors
        .iter()
        .map(|c| {
            let mut u = vec![0.0; n];
            for (coef, vi) in c.iter().zip(v) {
                crate::linalg::axpy(*coef, vi, &mut u);
            }
            u
        })
        .collect();
    OrbitalSet::new(space.clone(), lifted, pairs.values, b)
}

/// Step 4: `B`-orthonormalize the candidates, solve the projected pencil and
/// return all Ritz pairs. Fails if fewer than `required` directions survive.
pub fn rayleigh_ritz(
    candidates: &[DiscreteFunction],
    a: &SparseOperator,
    b: &SparseOperator,
    required: usize,
    drop_tol: f64,
) -> Result<OrbitalSet> {
    let basis = orthonormal_basis(candidates, b, required, drop_tol)?;
    let space = candidates[0].space().clone();
    project(&basis, &space, a, b)
}

pub(crate) fn orthonormal_basis(
    candidates: &[DiscreteFunction],
    b: &SparseOperator,
    required: usize,
    drop_tol: f64,
) -> Result<Orthonormalized> {
    let first = candidates.first().ok_or(Error::DegenerateSpan { rank: 0, required })?;
    for c in candidates {
        first.space().check_same_mesh(c.space())?;
    }
    let coeffs: Vec<Vec<f64>> = candidates.iter().map(|c| c.coefficients().to_vec()).collect();
    let basis = match b_orthonormalize(&coeffs, b, drop_tol) {
        Ok(basis) => basis,
        Err(Error::EmptyBasis) => return Err(Error::DegenerateSpan { rank: 0, required }),
        Err(e) => return Err(e),
    };
    if basis.vectors.len() < required {
        return Err(Error::DegenerateSpan { rank: basis.vectors.len(), required });
    }
    if !basis.dropped.is_empty() {
        warn!("dropped dependent candidates {:?}", basis.dropped);
    }
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gram_deviation;
    use crate::mesh::{bisect, create_box_mesh, BoxDomain};
    use crate::model::LinearProblem;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn square_ops(n: usize) -> (LinearProblem, Operators) {
        let p = LinearProblem::laplace(BoxDomain::unit(2));
        let space = FeSpace::new(create_box_mesh(BoxDomain::unit(2), &[n]).unwrap());
        let ops = operators_for(&p, &space).unwrap();
        (p, ops)
    }

    #[test]
    fn coarse_guess_close_to_first_eigenvalue() {
        let (_, ops) = square_ops(8);
        let g = initial_guess(&ops, 3).unwrap();
        assert!((g.eigenvalues()[0] / (2.0 * PI * PI) - 1.0).abs() < 0.05);
        assert!(g.certificate() <= 1e-10);
        assert!(initial_guess(&ops, ops.space.dof_count() + 1).is_err());
    }

    #[test]
    fn exact_eigenpairs_are_fixed_points() {
        let (_, ops) = square_ops(8);
        let g = initial_guess(&ops, 3).unwrap();
        let opts = SolveOptions { tol: 1e-12, ..Default::default() };
        let out = source_solve_step(&g, &ops, &opts).unwrap();
        for (w, u) in out.iter().zip(g.orbitals()) {
            for (a, b) in w.coefficients().iter().zip(u.coefficients()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
        let r = rayleigh_ritz(&out, &ops.a, &ops.b, 3, 1e-10).unwrap();
        for (a, b) in r.eigenvalues().iter().zip(g.eigenvalues()) {
            assert!((a - b).abs() <= 1e-10 * b);
        }
    }

    #[test]
    fn parallel_and_serial_solves_agree() {
        let coarse = initial_guess(&square_ops(6).1, 4).unwrap();
        let mesh = bisect(coarse.space().mesh(), &(0..coarse.space().mesh().num_elements()).collect::<Vec<_>>()).unwrap();
        let p = LinearProblem::laplace(BoxDomain::unit(2));
        let ops = operators_for(&p, &FeSpace::new(mesh)).unwrap();
        let serial = source_solve_step(&coarse, &ops, &SolveOptions { parallel: false, ..Default::default() }).unwrap();
        let parallel = source_solve_step(&coarse, &ops, &SolveOptions { parallel: true, ..Default::default() }).unwrap();
        for (s, q) in serial.iter().zip(&parallel) {
            assert_eq!(s.coefficients(), q.coefficients());
        }
        // residual check against the prolongated right-hand side
        let tol = SolveOptions::default().tol;
        let pro = coarse.prolongate(&ops.space).unwrap();
        for ((w, u), l) in serial.iter().zip(pro.orbitals()).zip(pro.eigenvalues()) {
            let aw = ops.a.mul_vec(w.coefficients());
            let bu: Vec<f64> = ops.b.mul_vec(u.coefficients()).iter().map(|x| l * x).collect();
            let r: Vec<f64> = aw.iter().zip(&bu).map(|(x, y)| x - y).collect();
            assert!(crate::linalg::norm2(&r) / crate::linalg::norm2(&bu) <= tol * 1.0001);
        }
    }

    #[test]
    fn single_candidate_gives_rayleigh_quotient() {
        let (_, ops) = square_ops(6);
        let u = DiscreteFunction::interpolate(ops.space.clone(), |x| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]));
        let r = rayleigh_ritz(&[u.clone()], &ops.a, &ops.b, 1, 1e-10).unwrap();
        let c = u.coefficients();
        let rq = ops.a.inner(c, c) / ops.b.inner(c, c);
        assert!((r.eigenvalues()[0] - rq).abs() < 1e-12 * rq);
    }

    #[test]
    fn ritz_values_bound_exact_discrete_values() {
        let (_, ops) = square_ops(8);
        let exact = baseline_geneig(&ops.a, &ops.b, 5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = ops.space.dof_count();
        let cands: Vec<DiscreteFunction> = (0..5)
            .map(|_| DiscreteFunction::new(ops.space.clone(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap())
            .collect();
        let r = rayleigh_ritz(&cands, &ops.a, &ops.b, 5, 1e-10).unwrap();
        for (ritz, e) in r.eigenvalues().iter().zip(&exact.values) {
            assert!(*ritz >= e * (1.0 - 1e-12));
        }
        assert!(gram_deviation(&r.orbitals().iter().map(|u| u.coefficients().to_vec()).collect::<Vec<_>>(), &ops.b) < 1e-10);
    }

    #[test]
    fn dependent_candidates_are_degenerate() {
        let (_, ops) = square_ops(4);
        let u = DiscreteFunction::interpolate(ops.space.clone(), |x| x[0]);
        let r = rayleigh_ritz(&[u.clone(), u], &ops.a, &ops.b, 2, 1e-8);
        assert!(matches!(r, Err(Error::DegenerateSpan { rank: 1, required: 2 })));
    }

    #[test]
    fn larger_span_never_raises_ritz_values() {
        let (_, ops) = square_ops(8);
        let n = ops.space.dof_count();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let cands: Vec<DiscreteFunction> = (0..8)
            .map(|_| DiscreteFunction::new(ops.space.clone(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap())
            .collect();
        let small = rayleigh_ritz(&cands[..4], &ops.a, &ops.b, 3, 1e-10).unwrap();
        let big = rayleigh_ritz(&cands, &ops.a, &ops.b, 3, 1e-10).unwrap();
        for i in 0..3 {
            assert!(big.eigenvalues()[i] <= small.eigenvalues()[i] + 1e-10);
        }
    }
}
