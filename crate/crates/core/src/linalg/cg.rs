//! Preconditioned conjugate gradients for symmetric positive definite systems.

use super::sparse::{axpy, dot, norm2, SparseOperator};
use crate::error::{invalid, Error, Result};

use super::multigrid::Multigrid;

#[derive(Debug, Clone, Copy, Default)]
pub enum Preconditioner<'a> {
    None,
    #[default]
    Jacobi,
    /// One V-cycle per iteration; the hierarchy must be built for `A`.
    Multigrid(&'a Multigrid),
}

#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final `||b - A x|| / ||b||`, recomputed from scratch.
    pub residual: f64,
}

/// Solve `A x = b` from a zero initial guess.
pub fn cg_solve(a: &SparseOperator, b: &[f64], tol: f64, max_iter: usize, precond: Preconditioner<'_>) -> Result<CgSolution> {
    cg_solve_from(a, b, None, tol, max_iter, precond)
}

/// Solve `A x = b` starting from `x0` (zero when `None`).
pub fn cg_solve_from(
    a: &SparseOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
    precond: Preconditioner<'_>,
) -> Result<CgSolution> {
    cg_monitored(a, b, x0, tol, max_iter, precond, &mut |_, _| {})
}

/// Like [`cg_solve_from`], calling `monitor(k, x_k)` after every iteration.
pub fn cg_monitored(
    a: &SparseOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
    precond: Preconditioner<'_>,
    monitor: &mut dyn FnMut(usize, &[f64]),
) -> Result<CgSolution> {
    let n = a.dim();
    if b.len() != n || x0.is_some_and(|x| x.len() != n) {
        return invalid(format!("vector length does not match the {n}x{n} operator"));
    }
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    if b.iter().any(|v| !v.is_finite()) {
        return invalid("right-hand side is not finite");
    }
    let diag = a.diagonal();
    if let Some(&d) = diag.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::NotSpd { iteration: 0, curvature: d });
    }
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(CgSolution { x: vec![0.0; n], iterations: 0, residual: 0.0 });
    }
    if let Preconditioner::Multigrid(mg) = precond {
        if mg.dim() != n {
            return invalid(format!("multigrid hierarchy has dimension {}, operator {n}", mg.dim()));
        }
    }
    let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
    let apply_precond = |r: &[f64], z: &mut [f64]| match precond {
        Preconditioner::None => z.copy_from_slice(r),
        Preconditioner::Jacobi => {
            for ((zi, ri), di) in z.iter_mut().zip(r).zip(&inv_diag) {
                *zi = ri * di;
            }
        }
        Preconditioner::Multigrid(mg) => mg.apply(r, z),
    };

    let mut x = x0.map_or_else(|| vec![0.0; n], |x| x.to_vec());
    let mut r = b.to_vec();
    let mut ap = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut iterations = 0;
    // at most one restart from the true residual if the recurrence drifts
    for _restart in 0..3 {
        a.mul_vec_into(&x, &mut ap);
        for i in 0..n {
            r[i] = b[i] - ap[i];
        }
        if norm2(&r) <= tol * bnorm {
            let residual = norm2(&r) / bnorm;
            return Ok(CgSolution { x, iterations, residual });
        }
        apply_precond(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        while iterations < max_iter {
            if !(rz > 0.0) {
                return Err(Error::NotSpd { iteration: iterations, curvature: rz });
            }
            a.mul_vec_into(&p, &mut ap);
            let curvature = dot(&p, &ap);
            if !(curvature > 0.0) {
                return Err(Error::NotSpd { iteration: iterations, curvature });
            }
            let alpha = rz / curvature;
            axpy(alpha, &p, &mut x);
            axpy(-alpha, &ap, &mut r);
            iterations += 1;
            monitor(iterations, &x);
            if norm2(&r) <= tol * bnorm {
                break;
            }
            apply_precond(&r, &mut z);
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        a.mul_vec_into(&x, &mut ap);
        let true_res = b.iter().zip(&ap).map(|(bi, ai)| (bi - ai) * (bi - ai)).sum::<f64>().sqrt() / bnorm;
        if true_res <= tol {
            return Ok(CgSolution { x, iterations, residual: true_res });
        }
        if iterations >= max_iter {
            return Err(Error::IterationLimit { iterations, residual: true_res });
        }
    }
    a.mul_vec_into(&x, &mut ap);
    let residual = b.iter().zip(&ap).map(|(bi, ai)| (bi - ai) * (bi - ai)).sum::<f64>().sqrt() / bnorm;
    Err(Error::IterationLimit { iterations, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_converges_in_one_step() {
        let a = SparseOperator::identity(4);
        let b = vec![1.0, -2.0, 3.0, 0.5];
        let s = cg_solve(&a, &b, 1e-12, 10, Preconditioner::None).unwrap();
        assert_eq!(s.iterations, 1);
        for (x, y) in s.x.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn two_by_two_system() {
        let a = SparseOperator::from_dense(&[vec![4.0, 1.0], vec![1.0, 3.0]]).unwrap();
        // Cramer's rule: det = 11, x = (1*3 - 1*2, 4*2 - 1*1) / 11
        let expected = [1.0 / 11.0, 7.0 / 11.0];
        for pc in [Preconditioner::None, Preconditioner::Jacobi] {
            let s = cg_solve(&a, &[1.0, 2.0], 1e-14, 10, pc).unwrap();
            assert!((s.x[0] - expected[0]).abs() < 1e-14);
            assert!((s.x[1] - expected[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn negative_diagonal_is_not_spd() {
        let a = SparseOperator::from_dense(&[vec![2.0, 0.0], vec![0.0, -5.0]]).unwrap();
        for pc in [Preconditioner::None, Preconditioner::Jacobi] {
            assert!(matches!(cg_solve(&a, &[1.0, 1.0], 1e-10, 10, pc), Err(Error::NotSpd { .. })));
        }
    }

    #[test]
    fn indefinite_with_positive_diagonal_detected() {
        let a = SparseOperator::from_dense(&[vec![1.0, 3.0], vec![3.0, 1.0]]).unwrap();
        assert!(matches!(
            cg_solve(&a, &[1.0, -1.0], 1e-10, 10, Preconditioner::None),
            Err(Error::NotSpd { .. })
        ));
    }

    #[test]
    fn iteration_limit_reports_residual() {
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        let a = SparseOperator::from_triplets(n, &t, true).unwrap();
        match cg_solve(&a, &vec![1.0; n], 1e-12, 3, Preconditioner::Jacobi) {
            Err(Error::IterationLimit { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn energy_error_never_increases() {
        let n = 40;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + 0.1 * i as f64));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        let a = SparseOperator::from_triplets(n, &t, true).unwrap();
        let b: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let exact = cg_solve(&a, &b, 1e-15, 1000, Preconditioner::None).unwrap().x;
        let mut errors = Vec::new();
        cg_monitored(&a, &b, None, 1e-14, 1000, Preconditioner::Jacobi, &mut |_, x| {
            let e: Vec<f64> = x.iter().zip(&exact).map(|(a, b)| a - b).collect();
            errors.push(a.inner(&e, &e).sqrt());
        })
        .unwrap();
        for w in errors.windows(2) {
            assert!(w[1] <= w[0] + 1e-14);
        }
    }
}
