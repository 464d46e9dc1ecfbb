use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use super::xc::{lda_vxc, XcKind};
use super::{ExternalPotential, Molecule};
use crate::error::{invalid, Error, Result};
use crate::fem::{
    assemble_mass, assemble_stiffness, assemble_weighted_mass, Constant, Diffusion, DiscreteFunction, ElementField,
    ElementPoint, FeSpace, Quadrature,
};
use crate::linalg::{cg_solve_from, Preconditioner, SparseOperator};
use crate::mesh::BoxDomain;

/// Electron density as a P1 function, renormalized to the occupation sum.
#[derive(Debug, Clone)]
pub struct Density {
    rho: DiscreteFunction,
    raw_integral: f64,
    clamped: usize,
}

impl Density {
    /// Wrap nodal density values, clamping negatives to zero and rescaling so
    /// that the integral equals `electrons` (unless the density vanishes).
    pub fn from_function(mut rho: DiscreteFunction, electrons: f64) -> Self {
        let mut clamped = 0;
        for c in rho.coefficients_mut() {
            if *c < 0.0 {
                *c = 0.0;
                clamped += 1;
            }
        }
        let raw_integral = rho.integral();
        if raw_integral > 0.0 && electrons > 0.0 {
            let s = electrons / raw_integral;
            rho.coefficients_mut().iter_mut().for_each(|c| *c *= s);
        }
        Self { rho, raw_integral, clamped }
    }

    pub fn function(&self) -> &DiscreteFunction {
        &self.rho
    }

    pub fn integral(&self) -> f64 {
        self.rho.integral()
    }

    /// Integral of the interpolant before renormalization.
    pub fn raw_integral(&self) -> f64 {
        self.raw_integral
    }

    /// Number of nodal values that were negative and set to zero.
    pub fn clamped(&self) -> usize {
        self.clamped
    }

    /// Linear mixing `(1 - alpha) self + alpha other` on the same space.
    pub fn mix(&self, other: &Density, alpha: f64) -> Result<Density> {
        if self.rho.mesh().id() != other.rho.mesh().id() {
            return Err(Error::Lineage("densities live on different meshes".into()));
        }
        let c = self
            .rho
            .coefficients()
            .iter()
            .zip(other.rho.coefficients())
            .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
            .collect();
        let rho = DiscreteFunction::new(self.rho.space().clone(), c)?;
        Ok(Density { rho, raw_integral: self.raw_integral, clamped: self.clamped + other.clamped })
    }

    /// Transfer to a refined space and renormalize.
    pub fn prolongate(&self, target: &Arc<FeSpace>, electrons: f64) -> Result<Density> {
        Ok(Density::from_function(self.rho.prolongate(target)?, electrons))
    }
}

/// `f_i = 2` for `N_e / 2` orbitals.
pub fn closed_shell_occupations(electrons: usize) -> Result<Vec<f64>> {
    if electrons == 0 || electrons % 2 != 0 {
        return invalid(format!("closed-shell occupations need an even electron count, got {electrons}"));
    }
    Ok(vec![2.0; electrons / 2])
}

/// Nodal interpolant of `sum_i f_i u_i^2`, normalized to `sum_i f_i`.
pub fn density_from_orbitals(orbitals: &[DiscreteFunction], occupations: &[f64]) -> Result<Density> {
    let first = orbitals.first().ok_or_else(|| Error::InvalidArgument("no orbitals".into()))?;
    if occupations.len() > orbitals.len() {
        return invalid(format!("{} occupations for {} orbitals", occupations.len(), orbitals.len()));
    }
    if let Some(f) = occupations.iter().find(|f| !(**f >= 0.0)) {
        return invalid(format!("occupation {f} is negative"));
    }
    let id = first.mesh().id();
    if orbitals.iter().any(|u| u.mesh().id() != id) {
        return Err(Error::Lineage("orbitals live on different meshes".into()));
    }
    let n = first.coefficients().len();
    let mut rho = vec![0.0; n];
    for (u, f) in orbitals.iter().zip(occupations) {
        for (r, c) in rho.iter_mut().zip(u.coefficients()) {
            *r += f * c * c;
        }
    }
    let total: f64 = occupations.iter().sum();
    Ok(Density::from_function(DiscreteFunction::new(first.space().clone(), rho)?, total))
}

/// Solve `-Laplace V_H = 4 pi rho` with zero boundary values.
pub fn hartree_solve(rho: &Density, tol: f64) -> Result<DiscreteFunction> {
    let space = rho.function().space();
    let k = assemble_stiffness(space, &Diffusion::identity(), &Constant(0.0))?;
    let m = assemble_mass(space);
    hartree_solve_with(&k, &m, rho, tol, None)
}

/// [`hartree_solve`] with precomputed Laplacian `k`, mass `m` and an optional warm start.
pub fn hartree_solve_with(
    k: &SparseOperator,
    m: &SparseOperator,
    rho: &Density,
    tol: f64,
    guess: Option<&DiscreteFunction>,
) -> Result<DiscreteFunction> {
    let space = rho.function().space();
    let mut b = m.mul_vec(rho.function().coefficients());
    b.iter_mut().for_each(|x| *x *= 4.0 * PI);
    let x0 = guess.filter(|g| g.mesh().id() == space.mesh().id()).map(|g| g.coefficients());
    let sol = cg_solve_from(k, &b, x0, tol, 20 * k.dim().max(100), Preconditioner::Jacobi)?;
    DiscreteFunction::new(space.clone(), sol.x)
}

/// `v_xc(rho(x))` sampled through the P1 density.
pub struct XcPotential<'a> {
    pub rho: &'a DiscreteFunction,
    pub kind: XcKind,
}

impl ElementField for XcPotential<'_> {
    fn value(&self, at: &ElementPoint<'_>) -> f64 {
        lda_vxc(self.rho.value_in_element(at.element, at.bary), self.kind).0
    }

    fn mesh_id(&self) -> Option<u64> {
        Some(self.rho.mesh().id())
    }
}

/// `int (eps_xc(rho) - v_xc(rho)) rho` with the degree-2 rule.
fn xc_double_counting(rho: &DiscreteFunction, kind: XcKind) -> f64 {
    let mesh = rho.mesh();
    let dim = mesh.dim();
    let q = Quadrature::order2(dim);
    (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let vol = mesh.element_volume(e);
            q.points
                .iter()
                .zip(&q.weights)
                .map(|(b, w)| {
                    let r = rho.value_in_element(e, b);
                    let (v, eps) = lda_vxc(r, kind);
                    w * vol * (eps - v) * r
                })
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

/// `E = sum f_i lambda_i - 1/2 int V_H rho + int (eps_xc - v_xc) rho + E_nn`
/// where `rho` and `V_H` are the density and Hartree potential that defined
/// the Hamiltonian whose eigenvalues are `lambda`.
pub fn total_energy(
    eigenvalues: &[f64],
    occupations: &[f64],
    rho: &Density,
    v_h: Option<&DiscreteFunction>,
    kind: XcKind,
    molecule: &Molecule,
) -> Result<f64> {
    if eigenvalues.len() < occupations.len() {
        return invalid("fewer eigenvalues than occupations");
    }
    let band: f64 = eigenvalues.iter().zip(occupations).map(|(l, f)| l * f).sum();
    let hartree = match v_h {
        Some(v) => {
            if v.mesh().id() != rho.function().mesh().id() {
                return Err(Error::Lineage("Hartree potential and density live on different meshes".into()));
            }
            let m = assemble_mass(v.space());
            m.inner(v.coefficients(), rho.function().coefficients())
        }
        None => 0.0,
    };
    let xc = if kind == XcKind::None { 0.0 } else { xc_double_counting(rho.function(), kind) };
    Ok(band - 0.5 * hartree + xc + molecule.nuclear_repulsion())
}

/// Closed-shell full-potential Kohn-Sham model in a box.
#[derive(Debug, Clone)]
pub struct KohnShamProblem {
    molecule: Molecule,
    domain: BoxDomain,
    xc: XcKind,
    external: ExternalPotential,
    occupations: Vec<f64>,
}

impl KohnShamProblem {
    pub fn new(molecule: Molecule, domain: BoxDomain, xc: XcKind, smoothing: f64) -> Result<Self> {
        if domain.dim != 3 {
            return invalid("Kohn-Sham problems are three-dimensional");
        }
        molecule.check_inside(&domain)?;
        let occupations = closed_shell_occupations(molecule.electrons())?;
        let external = ExternalPotential::new(&molecule, smoothing)?;
        Ok(Self { molecule, domain, xc, external, occupations })
    }

    pub fn molecule(&self) -> &Molecule {
        &self.molecule
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn xc(&self) -> XcKind {
        self.xc
    }

    pub fn external(&self) -> &ExternalPotential {
        &self.external
    }

    pub fn occupations(&self) -> &[f64] {
        &self.occupations
    }

    pub fn orbital_count(&self) -> usize {
        self.occupations.len()
    }

    pub fn electrons(&self) -> f64 {
        self.occupations.iter().sum()
    }

    /// Density-independent part `1/2 K + M[V_ext]`.
    pub fn fixed_operator(&self, space: &FeSpace) -> Result<SparseOperator> {
        let k = assemble_stiffness(space, &Diffusion::Scalar(0.5), &Constant(0.0))?;
        let v = assemble_weighted_mass(space, &self.external)?;
        k.add_scaled(&v, 1.0)
    }

    /// `M[V_H + V_xc(rho)]`.
    pub fn density_operator(&self, rho: &Density, v_h: Option<&DiscreteFunction>) -> Result<SparseOperator> {
        let space = rho.function().space();
        let xc = XcPotential { rho: rho.function(), kind: self.xc };
        let field = DensityPotential { v_h, xc };
        assemble_weighted_mass(space, &field)
    }

    /// Evaluate `V_ext + V_H + V_xc` at a point of element `e` (used by the estimator).
    pub fn effective_potential<'a>(&'a self, rho: &'a Density, v_h: Option<&'a DiscreteFunction>) -> EffectivePotential<'a> {
        EffectivePotential {
            external: &self.external,
            density: DensityPotential { v_h, xc: XcPotential { rho: rho.function(), kind: self.xc } },
        }
    }
}

struct DensityPotential<'a> {
    v_h: Option<&'a DiscreteFunction>,
    xc: XcPotential<'a>,
}

impl ElementField for DensityPotential<'_> {
    fn value(&self, at: &ElementPoint<'_>) -> f64 {
        let h = self.v_h.map_or(0.0, |v| v.value_in_element(at.element, at.bary));
        h + self.xc.value(at)
    }

    fn mesh_id(&self) -> Option<u64> {
        self.xc.mesh_id()
    }
}

/// `V_ext + V_H + V_xc(rho)`
pub struct EffectivePotential<'a> {
    external: &'a ExternalPotential,
    density: DensityPotential<'a>,
}

impl ElementField for EffectivePotential<'_> {
    fn value(&self, at: &ElementPoint<'_>) -> f64 {
        self.external.value(at) + self.density.value(at)
    }

    fn singular_points(&self) -> Vec<crate::Point> {
        self.external.singular_points()
    }

    fn mesh_id(&self) -> Option<u64> {
        self.density.mesh_id()
    }
}
