//! Reference solver for the lowest eigenpairs of a sparse pencil.
//!
//! Small problems go through nalgebra's dense Cholesky and symmetric
//! eigensolver; larger ones use shift-invert block subspace iteration with
//! CG inner solves.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use super::cg::{cg_solve_from, Preconditioner};
use super::dense::{fix_sign, Eigenpairs};
use super::orth::b_orthonormalize;
use super::sparse::{dot, norm2, SparseOperator};
use crate::error::{invalid, Error, Result};

pub const DENSE_LIMIT: usize = 5000;
pub const HARD_LIMIT: usize = 50000;
const RESIDUAL_TOL: f64 = 1e-9;

/// Lowest `count` eigenpairs of `A u = lambda B u`, `B`-orthonormal, ascending.
pub fn baseline_geneig(a: &SparseOperator, b: &SparseOperator, count: usize) -> Result<Eigenpairs> {
    let n = a.dim();
    if b.dim() != n {
        return invalid("A and B differ in dimension");
    }
    if n > HARD_LIMIT {
        return Err(Error::Capacity { dimension: n, limit: HARD_LIMIT });
    }
    if count == 0 || count > n {
        return invalid(format!("requested {count} eigenpairs of a dimension-{n} pencil"));
    }
    if n <= DENSE_LIMIT {
        dense_route(&a.to_dense(), &b.to_dense(), count)
    } else {
        subspace_iteration(a, b, count)
    }
}

/// Reduce with nalgebra Cholesky, solve with `SymmetricEigen`.
fn dense_route(a: &DMatrix<f64>, b: &DMatrix<f64>, count: usize) -> Result<Eigenpairs> {
    let n = a.nrows();
    let chol = nalgebra::Cholesky::new(b.clone()).ok_or_else(|| Error::Pencil("B is not positive definite".into()))?;
    let l = chol.l();
    let linv_a = l.solve_lower_triangular(a).ok_or_else(|| Error::Pencil("singular Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&linv_a.transpose())
        .ok_or_else(|| Error::Pencil("singular Cholesky factor".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
    let lt = l.transpose();
    let mut out = Eigenpairs { values: Vec::with_capacity(count), vectors: Vec::with_capacity(count) };
    for &k in order.iter().take(count) {
        let y = eig.eigenvectors.column(k).into_owned();
        let v = lt.solve_upper_triangular(&y).ok_or_else(|| Error::Pencil("singular Cholesky factor".into()))?;
        let mut v: Vec<f64> = v.iter().copied().collect();
        fix_sign(&mut v);
        out.values.push(eig.eigenvalues[k]);
        out.vectors.push(v);
    }
    Ok(out)
}

fn residual(a: &SparseOperator, b: &SparseOperator, lambda: f64, v: &[f64]) -> f64 {
    let av = a.mul_vec(v);
    let bv = b.mul_vec(v);
    let r: Vec<f64> = av.iter().zip(&bv).map(|(x, y)| x - lambda * y).collect();
    norm2(&r) / (norm2(&av) + lambda.abs() * norm2(&bv)).max(f64::MIN_POSITIVE)
}

fn subspace_iteration(a: &SparseOperator, b: &SparseOperator, count: usize) -> Result<Eigenpairs> {
    let n = a.dim();
    let block = (count + (count / 2).max(4)).min(n);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    let start: Vec<Vec<f64>> = (0..block).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let mut x = b_orthonormalize(&start, b, 1e-10)?.vectors;

    // shift down until A - sigma B is positive definite
    let mut sigma = 0.0;
    let mut shifted = a.clone();
    for attempt in 0.. {
        let probe = b.mul_vec(&x[0]);
        match cg_solve_from(&shifted, &probe, None, 1e-6, 20 * n, Preconditioner::Jacobi) {
            Ok(_) => break,
            Err(Error::NotSpd { .. }) if attempt < 60 => {
                let scale = a.diagonal().iter().fold(0.0_f64, |m, d| m.max(d.abs()))
                    / b.diagonal().iter().fold(f64::MAX, |m, d| m.min(*d)).max(f64::MIN_POSITIVE);
                sigma = if sigma == 0.0 { -1e-3 * scale.max(1.0) } else { 2.0 * sigma };
                shifted = a.add_scaled(b, -sigma)?;
            }
            Err(e) => return Err(e),
        }
    }

    let mut values = Vec::new();
    for _sweep in 0..500 {
        let bx: Vec<Vec<f64>> = x.iter().map(|v| b.mul_vec(v)).collect();
        let y: Vec<Vec<f64>> = bx
            .par_iter()
            .zip(x.par_iter())
            .map(|(rhs, guess)| cg_solve_from(&shifted, rhs, Some(guess), 1e-11, 20 * n, Preconditioner::Jacobi).map(|s| s.x))
            .collect::<Result<_>>()?;
        let ay: Vec<Vec<f64>> = y.iter().map(|v| a.mul_vec(v)).collect();
        let by: Vec<Vec<f64>> = y.iter().map(|v| b.mul_vec(v)).collect();
        let k = y.len();
        let at = DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(&y[i], &ay[j]) + dot(&y[j], &ay[i])));
        let bt = DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(&y[i], &by[j]) + dot(&y[j], &by[i])));
        let small = dense_route(&at, &bt, k)?;
        x = small
            .vectors
            .iter()
            .map(|c| {
                let mut v = vec![0.0; n];
                for (coef, yj) in c.iter().zip(&y) {
                    super::sparse::axpy(*coef, yj, &mut v);
                }
                v
            })
            .collect();
        values = small.values;
        let worst = (0..count).map(|i| residual(a, b, values[i], &x[i])).fold(0.0_f64, f64::max);
        log::debug!("subspace iteration residual {worst:e}");
        if worst <= RESIDUAL_TOL {
            break;
        }
    }
    let mut out = Eigenpairs { values: Vec::with_capacity(count), vectors: Vec::with_capacity(count) };
    for (lam, mut v) in values.into_iter().zip(x).take(count) {
        fix_sign(&mut v);
        out.values.push(lam);
        out.vectors.push(v);
    }
    Ok(out)
}
