use super::sparse::{axpy, SparseOperator};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone)]
pub struct Orthonormalized {
    pub vectors: Vec<Vec<f64>>,
    /// Input indices that were removed as (numerically) dependent.
    pub dropped: Vec<usize>,
    /// For each kept vector, its input index.
    pub kept: Vec<usize>,
}

/// Modified Gram-Schmidt in the `B` inner product, applied twice per vector.
///
/// A vector is dropped when its `B`-norm after projection is at most
/// `drop_tol` times its original `B`-norm.
pub fn b_orthonormalize(vectors: &[Vec<f64>], b: &SparseOperator, drop_tol: f64) -> Result<Orthonormalized> {
    let n = b.dim();
    if vectors.iter().any(|v| v.len() != n) {
        return invalid("vector length does not match the operator");
    }
    if !(drop_tol >= 0.0) {
        return invalid("drop tolerance must be nonnegative");
    }
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut bout: Vec<Vec<f64>> = Vec::new();
    let mut dropped = Vec::new();
    let mut kept = Vec::new();
    for (idx, v) in vectors.iter().enumerate() {
        let mut w = v.clone();
        let original = b.inner(&w, &w).max(0.0).sqrt();
        if !(original > 0.0) || !original.is_finite() {
            dropped.push(idx);
            continue;
        }
        for _pass in 0..2 {
            for (q, bq) in out.iter().zip(&bout) {
                let c = super::sparse::dot(bq, &w);
                axpy(-c, q, &mut w);
            }
        }
        let bw = b.mul_vec(&w);
        let nrm = super::sparse::dot(&w, &bw).max(0.0).sqrt();
        if nrm <= drop_tol * original {
            dropped.push(idx);
            continue;
        }
        w.iter_mut().for_each(|x| *x /= nrm);
        bout.push(bw.into_iter().map(|x| x / nrm).collect());
        out.push(w);
        kept.push(idx);
    }
    if out.is_empty() {
        return Err(Error::EmptyBasis);
    }
    Ok(Orthonormalized { vectors: out, dropped, kept })
}

/// Largest entry of `|V^T B V - I|`.
pub fn gram_deviation(vectors: &[Vec<f64>], b: &SparseOperator) -> f64 {
    let bv: Vec<Vec<f64>> = vectors.iter().map(|v| b.mul_vec(v)).collect();
    let mut worst = 0.0_f64;
    for (i, u) in vectors.iter().enumerate() {
        for (j, bw) in bv.iter().enumerate() {
            let g = super::sparse::dot(u, bw);
            worst = worst.max((g - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    worst
}
