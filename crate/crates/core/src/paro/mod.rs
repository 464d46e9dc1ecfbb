//! Parallel orbital-updating drivers.
//!
//! One outer iteration: refine the shared mesh from the current orbitals,
//! solve one independent source problem per orbital on the new mesh, then
//! project onto the span of the solutions.

mod driver;
mod probe;
mod steps;
mod trace;

use std::sync::Arc;

pub use driver::{baseline_scf, paro_kohn_sham, paro_linear, ParoResult, ScfResult};
pub use probe::{theorem_a1_probe, ProbeResult};
pub use steps::{initial_guess, operators_for, rayleigh_ritz, source_solve_step, Operators, SolveOptions};
pub use trace::{Trace, TraceRow};

use crate::error::{invalid, Result};
use crate::fem::{DiscreteFunction, FeSpace};
use crate::linalg::gram_deviation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MarkingStrategy {
    #[default]
    Dorfler,
    Maximum,
    /// Every element, ignoring the indicators.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParoConfig {
    /// Number of wanted (occupied) orbitals `N`.
    pub orbitals: usize,
    /// Extra orbitals `m` carried along.
    pub augmentation: usize,
    pub marking: MarkingStrategy,
    pub theta: f64,
    /// Adaptive refinement on; otherwise the initial mesh is kept.
    pub refine: bool,
    /// Refinement stops once the space reaches this many DOFs.
    pub max_dofs: usize,
    /// Relative residual for the Step-3 solves.
    pub cg_tol: f64,
    /// Loose tolerance used in the first iteration; the tolerance used in
    /// iteration `n` is `max(cg_tol, cg_tol_start * 0.1^n)`.
    pub cg_tol_start: f64,
    pub cg_max_iter: usize,
    pub max_iterations: usize,
    /// Density mixing parameter `alpha`.
    pub mixing: f64,
    pub energy_tol: f64,
    pub eta_tol: f64,
    pub drop_tol: f64,
    pub hartree_tol: f64,
    /// Multigrid-preconditioned Step-3 solves; diagonal scaling otherwise.
    pub multigrid: bool,
    /// Step-3 solves on the rayon pool; one after another otherwise.
    pub parallel: bool,
    pub seed: u64,
    /// Record wall-clock timings in the trace (zero otherwise).
    pub record_timings: bool,
}

impl Default for ParoConfig {
    fn default() -> Self {
        Self {
            orbitals: 1,
            augmentation: 2,
            marking: MarkingStrategy::Dorfler,
            theta: 0.5,
            refine: true,
            max_dofs: 100_000,
            cg_tol: 1e-8,
            cg_tol_start: 1e-8,
            cg_max_iter: 20_000,
            max_iterations: 200,
            mixing: 0.3,
            energy_tol: 1e-6,
            eta_tol: 1e-3,
            drop_tol: 1e-10,
            hartree_tol: 1e-10,
            multigrid: true,
            parallel: true,
            seed: 0,
            record_timings: true,
        }
    }
}

impl ParoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.orbitals == 0 {
            return invalid("at least one orbital is required");
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return invalid(format!("theta = {} must lie in (0, 1)", self.theta));
        }
        if !(self.mixing > 0.0 && self.mixing <= 1.0) {
            return invalid(format!("mixing = {} must lie in (0, 1]", self.mixing));
        }
        for (name, v) in [
            ("cg_tol", self.cg_tol),
            ("cg_tol_start", self.cg_tol_start),
            ("energy_tol", self.energy_tol),
            ("eta_tol", self.eta_tol),
            ("hartree_tol", self.hartree_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return invalid(format!("{name} = {v} must be positive"));
            }
        }
        if !(self.drop_tol >= 0.0) {
            return invalid("drop_tol must be nonnegative");
        }
        if self.cg_max_iter == 0 || self.max_iterations == 0 {
            return invalid("iteration limits must be positive");
        }
        Ok(())
    }

    /// `K = N + m`
    pub fn block_size(&self) -> usize {
        self.orbitals + self.augmentation
    }

    pub(crate) fn cg_tol_at(&self, iteration: usize) -> f64 {
        let decayed = self.cg_tol_start * 0.1f64.powi(iteration.min(300) as i32);
        decayed.max(self.cg_tol).min(self.cg_tol_start.max(self.cg_tol))
    }
}

/// `B`-orthonormal orbitals on one mesh generation with ascending eigenvalue estimates.
#[derive(Debug, Clone)]
pub struct OrbitalSet {
    space: Arc<FeSpace>,
    orbitals: Vec<DiscreteFunction>,
    eigenvalues: Vec<f64>,
    certificate: f64,
}

impl OrbitalSet {
    /// `vectors` must be `mass`-orthonormal coefficient vectors on `space`.
    pub fn new(
        space: Arc<FeSpace>,
        vectors: Vec<Vec<f64>>,
        eigenvalues: Vec<f64>,
        mass: &crate::linalg::SparseOperator,
    ) -> Result<Self> {
        if vectors.len() != eigenvalues.len() || vectors.is_empty() {
            return invalid("orbital and eigenvalue counts differ");
        }
        if eigenvalues.windows(2).any(|w| w[0] > w[1]) {
            return invalid("eigenvalue estimates must be ascending");
        }
        let certificate = gram_deviation(&vectors, mass);
        let orbitals = vectors
            .into_iter()
            .map(|v| DiscreteFunction::new(space.clone(), v))
            .collect::<Result<_>>()?;
        Ok(Self { space, orbitals, eigenvalues, certificate })
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn generation(&self) -> u32 {
        self.space.mesh().generation()
    }

    pub fn len(&self) -> usize {
        self.orbitals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orbitals.is_empty()
    }

    pub fn orbitals(&self) -> &[DiscreteFunction] {
        &self.orbitals
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Largest entry of `|U^T B U - I|`.
    pub fn certificate(&self) -> f64 {
        self.certificate
    }

    /// Embed every orbital into a refinement. Orthonormality is preserved exactly
    /// by the nested spaces, so the certificate carries over.
    pub fn prolongate(&self, target: &Arc<FeSpace>) -> Result<OrbitalSet> {
        let orbitals = self.orbitals.iter().map(|u| u.prolongate(target)).collect::<Result<_>>()?;
        Ok(Self { space: target.clone(), orbitals, eigenvalues: self.eigenvalues.clone(), certificate: self.certificate })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(ParoConfig::default().validate().is_ok());
        assert!(ParoConfig { mixing: 0.0, ..Default::default() }.validate().is_err());
        assert!(ParoConfig { theta: 1.0, ..Default::default() }.validate().is_err());
        assert!(ParoConfig { orbitals: 0, ..Default::default() }.validate().is_err());
        assert!(ParoConfig { energy_tol: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn tolerance_schedule() {
        let c = ParoConfig { cg_tol: 1e-10, cg_tol_start: 1e-4, ..Default::default() };
        assert_eq!(c.cg_tol_at(0), 1e-4);
        assert!((c.cg_tol_at(2) - 1e-6).abs() < 1e-20);
        assert_eq!(c.cg_tol_at(50), 1e-10);
    }
}
