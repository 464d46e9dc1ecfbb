//! Small dense symmetric-definite generalized eigenproblems.
//!
//! `B = L L^T` by Cholesky, the standard problem `L^-1 A L^-T y = lambda y` by
//! cyclic Jacobi rotations, then `v = L^-T y`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Jacobi sweeps stop once the off-diagonal Frobenius norm drops below this
/// fraction of the full norm.
const JACOBI_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigenpairs sorted ascending. Vectors are stored as coefficient vectors.
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// `(A, B)` with `A` symmetric and `B` symmetric positive definite.
#[derive(Debug, Clone)]
pub struct DenseSymPencil {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl DenseSymPencil {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || b.ncols() != n {
            return Err(Error::Pencil("matrices must be square and of equal size".into()));
        }
        for (name, m) in [("A", &a), ("B", &b)] {
            let scale = m.amax().max(f64::MIN_POSITIVE);
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Pencil(format!("{name} has non-finite entries")));
            }
            for i in 0..n {
                for j in 0..i {
                    if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                        return Err(Error::Pencil(format!("{name} is not symmetric at ({i}, {j})")));
                    }
                }
            }
        }
        Ok(Self { a, b })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
}

/// Lower Cholesky factor; fails unless `m` is positive definite.
pub fn cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(Error::Pencil(format!("B is not positive definite (pivot {j} = {d:e})")));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solve `L X = M` for lower-triangular `L`.
fn forward_solve(l: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut x = m.clone();
    for c in 0..m.ncols() {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}

/// Solve `L^T X = M` for lower-triangular `L`.
fn backward_solve_transposed(l: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut x = m.clone();
    for c in 0..m.ncols() {
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns unsorted eigenvalues and the orthogonal matrix of eigenvectors (columns).
pub fn jacobi_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let total = a.norm();
    if total == 0.0 {
        return (vec![0.0; n], v);
    }
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
        }
        if off.sqrt() <= JACOBI_TOL * total * 1e-3 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

/// Flip `v` so its first entry above `1e-10 * max|v|` is positive.
pub fn fix_sign(v: &mut [f64]) {
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-10 * scale) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// All eigenpairs of the pencil, ascending, `B`-orthonormal.
pub fn dense_sym_geneig(pencil: &DenseSymPencil) -> Result<Eigenpairs> {
    let n = pencil.dim();
    if n == 0 {
        return Ok(Eigenpairs { values: Vec::new(), vectors: Vec::new() });
    }
    let l = cholesky(&pencil.b)?;
    // C = L^-1 A L^-T
    let y = forward_solve(&l, &pencil.a);
    let c = forward_solve(&l, &y.transpose());
    let c = (&c + c.transpose()) * 0.5;
    let (values, w) = jacobi_eigen(&c);
    let v = backward_solve_transposed(&l, &w);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    let mut out = Eigenpairs { values: Vec::with_capacity(n), vectors: Vec::with_capacity(n) };
    for k in order {
        let mut col: Vec<f64> = v.column(k).iter().copied().collect();
        fix_sign(&mut col);
        out.values.push(values[k]);
        out.vectors.push(col);
    }
    Ok(out)
}
