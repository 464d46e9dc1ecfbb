//! Sparse storage, conjugate gradients, dense generalized eigensolves and
//! `B`-orthonormalization.

mod baseline;
mod cg;
pub mod dense;
mod multigrid;
mod orth;
mod sparse;

pub use baseline::{baseline_geneig, DENSE_LIMIT, HARD_LIMIT};
pub use cg::{cg_monitored, cg_solve, cg_solve_from, CgSolution, Preconditioner};
pub use dense::{dense_sym_geneig, DenseSymPencil, Eigenpairs};
pub use multigrid::{Multigrid, Prolongation, COARSE_DENSE_LIMIT};
pub use orth::{b_orthonormalize, gram_deviation, Orthonormalized};
pub use sparse::{axpy, dot, norm2, SparseOperator};
