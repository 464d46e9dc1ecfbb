use std::f64::consts::PI;

use paro_core::linalg::baseline_geneig;
use paro_core::mesh::{create_box_mesh, BoxDomain};
use paro_core::model::{KohnShamProblem, LinearProblem, Molecule, XcKind};
use paro_core::paro::{operators_for, paro_kohn_sham, paro_linear, ParoConfig};
use paro_core::fem::FeSpace;

#[test]
fn square_spectrum_with_five_orbitals() {
    let problem = LinearProblem::laplace(BoxDomain::unit(2));
    let config = ParoConfig { orbitals: 5, max_dofs: 20_000, eta_tol: 1e-12, ..Default::default() };
    let r = paro_linear(&problem, create_box_mesh(BoxDomain::unit(2), &[8]).unwrap(), &config).unwrap();
    let exact = [2.0, 5.0, 5.0, 8.0, 10.0].map(|k| k * PI * PI);
    for (l, e) in r.eigenvalues().iter().zip(exact) {
        assert!((l - e).abs() / e < 2e-2, "{l} vs {e}");
    }
    assert!(r.orbitals.certificate() <= 1e-8);
    for row in r.trace.rows() {
        assert!(row.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }
    // refinement only ever grows the space
    assert!(r.trace.rows().windows(2).all(|w| w[0].dofs <= w[1].dofs));
}

#[test]
fn fixed_mesh_matches_baseline() {
    let problem = LinearProblem::harmonic_oscillator(BoxDomain::cube(2, -8.0, 8.0).unwrap());
    let mesh = create_box_mesh(BoxDomain::cube(2, -8.0, 8.0).unwrap(), &[16]).unwrap();
    let ops = operators_for(&problem, &FeSpace::new(mesh.clone())).unwrap();
    let reference = baseline_geneig(&ops.a, &ops.b, 3).unwrap();
    let config = ParoConfig { orbitals: 3, refine: false, cg_tol: 1e-12, energy_tol: 1e-13, ..Default::default() };
    let r = paro_linear(&problem, mesh, &config).unwrap();
    assert!(r.converged);
    for (l, e) in r.eigenvalues().iter().zip(&reference.values) {
        assert!((l - e).abs() / e <= 1e-8, "{l} vs {e}");
    }
}

#[test]
fn augmentation_changes_path_not_fixed_point() {
    let domain = BoxDomain::cube(3, -6.0, 6.0).unwrap();
    let problem = KohnShamProblem::new(Molecule::helium(), domain, XcKind::Lda, 0.0).unwrap();
    let mesh = create_box_mesh(domain, &[6]).unwrap();
    let energy_tol = 1e-9;
    let run = |m: usize| {
        let config = ParoConfig { augmentation: m, refine: false, energy_tol, ..Default::default() };
        paro_kohn_sham(&problem, mesh.clone(), &config).unwrap()
    };
    let (with, without) = (run(2), run(0));
    assert!(with.converged && without.converged);
    assert!((with.energy - without.energy).abs() <= 2.0 * energy_tol, "{} vs {}", with.energy, without.energy);
}

#[test]
fn full_mixing_keeps_orbitals_orthonormal() {
    let domain = BoxDomain::cube(3, -6.0, 6.0).unwrap();
    let problem = KohnShamProblem::new(Molecule::helium(), domain, XcKind::Exchange, 0.0).unwrap();
    let config = ParoConfig { mixing: 1.0, max_dofs: 4_000, max_iterations: 12, ..Default::default() };
    let r = paro_kohn_sham(&problem, create_box_mesh(domain, &[4]).unwrap(), &config).unwrap();
    assert!(r.orbitals.certificate() <= 1e-8);
    let rho = r.density.unwrap();
    assert!((rho.integral() - 2.0).abs() < 1e-10);
    assert!(r.trace.rows().iter().all(|row| row.total_energy.is_some_and(f64::is_finite)));
}

#[test]
fn orbital_count_must_match_electrons() {
    let domain = BoxDomain::cube(3, -6.0, 6.0).unwrap();
    let problem = KohnShamProblem::new(Molecule::helium(), domain, XcKind::Lda, 0.0).unwrap();
    let config = ParoConfig { orbitals: 2, ..Default::default() };
    assert!(paro_kohn_sham(&problem, create_box_mesh(domain, &[4]).unwrap(), &config).is_err());
}
