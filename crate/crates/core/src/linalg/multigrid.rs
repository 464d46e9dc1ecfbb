//! Multigrid V-cycle on a nested hierarchy, used as a CG preconditioner.
//!
//! Coarse operators are Galerkin products `P^T A P`; smoothing is one forward
//! Gauss-Seidel sweep before and one backward sweep after the coarse
//! correction, so the cycle is a symmetric positive definite operator.

use nalgebra::DMatrix;

use super::dense::cholesky;
use super::sparse::SparseOperator;
use crate::error::{invalid, Result};

/// Coarsest systems up to this size are factored densely.
pub const COARSE_DENSE_LIMIT: usize = 3000;
const COARSE_SWEEPS: usize = 40;

/// Interpolation from a coarse vector space into a fine one, stored by fine row.
#[derive(Debug, Clone)]
pub struct Prolongation {
    coarse_dim: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl Prolongation {
    pub fn new(coarse_dim: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if rows.iter().flatten().any(|&(c, w)| c >= coarse_dim || !w.is_finite()) {
            return invalid("prolongation entry outside the coarse space");
        }
        Ok(Self { coarse_dim, rows })
    }

    pub fn fine_dim(&self) -> usize {
        self.rows.len()
    }

    pub fn coarse_dim(&self) -> usize {
        self.coarse_dim
    }

    /// `fine += P coarse`
    pub fn add_to_fine(&self, coarse: &[f64], fine: &mut [f64]) {
        for (f, row) in fine.iter_mut().zip(&self.rows) {
            *f += row.iter().map(|&(c, w)| w * coarse[c]).sum::<f64>();
        }
    }

    /// `P^T fine`
    pub fn restrict(&self, fine: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.coarse_dim];
        for (f, row) in fine.iter().zip(&self.rows) {
            for &(c, w) in row {
                out[c] += w * f;
            }
        }
        out
    }

    /// `P^T A P`
    pub fn galerkin(&self, a: &SparseOperator) -> Result<SparseOperator> {
        let (rp, ci, va) = (a.row_ptr(), a.col_idx(), a.values());
        let mut triplets = Vec::with_capacity(a.nnz() * 4);
        for i in 0..a.dim() {
            for k in rp[i]..rp[i + 1] {
                let j = ci[k];
                for &(ic, wi) in &self.rows[i] {
                    for &(jc, wj) in &self.rows[j] {
                        triplets.push((ic, jc, wi * va[k] * wj));
                    }
                }
            }
        }
        SparseOperator::from_triplets(self.coarse_dim, &triplets, a.is_flagged_symmetric())
    }
}

#[derive(Debug, Clone)]
struct Level {
    a: SparseOperator,
    diag: Vec<f64>,
}

#[derive(Debug, Clone)]
enum CoarseSolver {
    Empty,
    Dense(DMatrix<f64>),
    Sweeps,
}

#[derive(Debug, Clone)]
pub struct Multigrid {
    levels: Vec<Level>,
    /// `transfers[l]` maps level `l + 1` into level `l`.
    transfers: Vec<Prolongation>,
    coarse: CoarseSolver,
}

impl Multigrid {
    /// `transfers` run from the finest level downwards.
    pub fn new(a: SparseOperator, transfers: Vec<Prolongation>) -> Result<Self> {
        let mut levels = Vec::with_capacity(transfers.len() + 1);
        let mut current = a;
        for p in &transfers {
            if p.fine_dim() != current.dim() {
                return invalid(format!(
                    "prolongation has {} fine rows, operator has dimension {}",
                    p.fine_dim(),
                    current.dim()
                ));
            }
            let next = p.galerkin(&current)?;
            let diag = current.diagonal();
            levels.push(Level { a: current, diag });
            current = next;
        }
        let diag = current.diagonal();
        let coarse = if current.dim() == 0 {
            CoarseSolver::Empty
        } else if current.dim() <= COARSE_DENSE_LIMIT {
            CoarseSolver::Dense(cholesky(&current.to_dense())?)
        } else {
            CoarseSolver::Sweeps
        };
        levels.push(Level { a: current, diag });
        Ok(Self { levels, transfers, coarse })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level_dims(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.a.dim()).collect()
    }

    pub fn dim(&self) -> usize {
        self.levels[0].a.dim()
    }

    /// `z = M^-1 r` for one V-cycle from a zero guess.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let x = self.cycle(0, r);
        z.copy_from_slice(&x);
    }

    fn cycle(&self, l: usize, b: &[f64]) -> Vec<f64> {
        let level = &self.levels[l];
        let n = level.a.dim();
        if l + 1 == self.levels.len() {
            return self.coarse_solve(b);
        }
        let mut x = vec![0.0; n];
        gauss_seidel(&level.a, &level.diag, b, &mut x, false);
        let ax = level.a.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let p = &self.transfers[l];
        let xc = self.cycle(l + 1, &p.restrict(&r));
        p.add_to_fine(&xc, &mut x);
        gauss_seidel(&level.a, &level.diag, b, &mut x, true);
        x
    }

    fn coarse_solve(&self, b: &[f64]) -> Vec<f64> {
        let level = self.levels.last().expect("at least one level");
        match &self.coarse {
            CoarseSolver::Empty => Vec::new(),
            CoarseSolver::Dense(l) => {
                let n = b.len();
                let mut y = b.to_vec();
                for i in 0..n {
                    let mut s = y[i];
                    for k in 0..i {
                        s -= l[(i, k)] * y[k];
                    }
                    y[i] = s / l[(i, i)];
                }
                for i in (0..n).rev() {
                    let mut s = y[i];
                    for k in i + 1..n {
                        s -= l[(k, i)] * y[k];
                    }
                    y[i] = s / l[(i, i)];
                }
                y
            }
            CoarseSolver::Sweeps => {
                let mut x = vec![0.0; b.len()];
                for _ in 0..COARSE_SWEEPS {
                    gauss_seidel(&level.a, &level.diag, b, &mut x, false);
                    gauss_seidel(&level.a, &level.diag, b, &mut x, true);
                }
                x
            }
        }
    }
}

fn gauss_seidel(a: &SparseOperator, diag: &[f64], b: &[f64], x: &mut [f64], backward: bool) {
    let (rp, ci, va) = (a.row_ptr(), a.col_idx(), a.values());
    let n = a.dim();
    let mut relax = |i: usize| {
        let mut s = b[i];
        for k in rp[i]..rp[i + 1] {
            if ci[k] != i {
                s -= va[k] * x[ci[k]];
            }
        }
        x[i] = s / diag[i];
    };
    if backward {
        (0..n).rev().for_each(&mut relax);
    } else {
        (0..n).for_each(&mut relax);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cg_solve, Preconditioner};

    fn laplace_1d(n: usize) -> SparseOperator {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        SparseOperator::from_triplets(n, &t, true).unwrap()
    }

    /// Linear interpolation from `(n - 1) / 2` interior points onto `n`.
    fn interpolation_1d(n: usize) -> Prolongation {
        let nc = (n - 1) / 2;
        let rows = (0..n)
            .map(|i| {
                if i % 2 == 1 {
                    vec![(i / 2, 1.0)]
                } else {
                    let mut r = Vec::new();
                    if i >= 2 {
                        r.push((i / 2 - 1, 0.5));
                    }
                    if i / 2 < nc {
                        r.push((i / 2, 0.5));
                    }
                    r
                }
            })
            .collect();
        Prolongation::new(nc, rows).unwrap()
    }

    #[test]
    fn galerkin_of_1d_laplacian_is_scaled_laplacian() {
        let a = laplace_1d(7);
        let ac = interpolation_1d(7).galerkin(&a).unwrap();
        let expected = laplace_1d(3).scaled(0.5);
        for i in 0..3 {
            for j in 0..3 {
                assert!((ac.get(i, j) - expected.get(i, j)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_level_is_exact_solve() {
        let a = laplace_1d(9);
        let mg = Multigrid::new(a.clone(), Vec::new()).unwrap();
        let b: Vec<f64> = (0..9).map(|i| i as f64 - 3.0).collect();
        let mut z = vec![0.0; 9];
        mg.apply(&b, &mut z);
        let r = a.mul_vec(&z);
        for (x, y) in r.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn cycle_is_symmetric() {
        let n = 31;
        let a = laplace_1d(n);
        let p1 = interpolation_1d(n);
        let p2 = interpolation_1d(15);
        let mg = Multigrid::new(a, vec![p1, p2]).unwrap();
        assert_eq!(mg.level_dims(), vec![31, 15, 7]);
        let u: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let v: Vec<f64> = (0..n).map(|i| ((i * 3) % 5) as f64 - 2.0).collect();
        let (mut mu, mut mv) = (vec![0.0; n], vec![0.0; n]);
        mg.apply(&u, &mut mu);
        mg.apply(&v, &mut mv);
        let lhs: f64 = v.iter().zip(&mu).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(&mv).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn preconditioned_iterations_do_not_grow_with_size() {
        let mut counts = Vec::new();
        for levels in [4usize, 6, 8] {
            let n = (1 << levels) - 1;
            let a = laplace_1d(n);
            let mut transfers = Vec::new();
            let mut m = n;
            while m > 3 {
                transfers.push(interpolation_1d(m));
                m = (m - 1) / 2;
            }
            let mg = Multigrid::new(a.clone(), transfers).unwrap();
            let b = vec![1.0; n];
            let s = cg_solve(&a, &b, 1e-10, 1000, Preconditioner::Multigrid(&mg)).unwrap();
            counts.push(s.iterations);
        }
        assert!(counts[2] <= counts[0] + 3, "{counts:?}");
    }

    #[test]
    fn mismatched_transfer_rejected() {
        assert!(Multigrid::new(laplace_1d(5), vec![interpolation_1d(7)]).is_err());
        assert!(Prolongation::new(1, vec![vec![(2, 1.0)]]).is_err());
    }
}
