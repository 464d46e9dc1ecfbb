//! Problem definitions: linear elliptic operators, single-particle
//! Schrodinger operators and the full-potential Kohn-Sham model.

mod kohn_sham;
mod linear;
mod molecule;
mod xc;

pub use kohn_sham::{
    closed_shell_occupations, density_from_orbitals, hartree_solve, hartree_solve_with, total_energy, Density,
    KohnShamProblem, XcPotential,
};
pub use linear::{LinearProblem, SchrodingerProblem, SingleParticleForm};
pub use molecule::{ExternalPotential, Molecule, Nucleus};
pub use xc::{lda_vxc, pz81_correlation, XcKind};
