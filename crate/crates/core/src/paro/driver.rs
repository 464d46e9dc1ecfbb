use std::sync::Arc;
use std::time::Instant;

use log::{debug, info, warn};

use super::steps::{initial_guess, orthonormal_basis, project, source_solve_step, Operators, SolveOptions};
use super::trace::{Trace, TraceRow};
use super::{MarkingStrategy, OrbitalSet, ParoConfig};
use crate::adapt::{dorfler_mark, estimate_source_residual, maximum_mark, ErrorIndicators, Marked};
use crate::error::{invalid, Error, Result};
use crate::fem::{
    assemble_mass, assemble_stiffness, Constant, Diffusion, DiscreteFunction, ElementField, FeSpace, Scaled,
};
use crate::linalg::{baseline_geneig, SparseOperator};
use crate::mesh::{bisect, Mesh};
use crate::model::{
    density_from_orbitals, hartree_solve_with, total_energy, Density, KohnShamProblem, SingleParticleForm,
};

#[derive(Debug, Clone)]
pub struct ParoResult {
    /// All `N + m` orbitals of the last iteration.
    pub orbitals: OrbitalSet,
    pub trace: Trace,
    pub converged: bool,
    pub iterations: usize,
    /// `sum_{i<=N} lambda_i` in linear mode, the total energy in Kohn-Sham mode.
    pub energy: f64,
    /// Density that defined the last Hamiltonian (Kohn-Sham mode).
    pub density: Option<Density>,
    pub restarts: usize,
}

impl ParoResult {
    pub fn mesh(&self) -> &Arc<Mesh> {
        self.orbitals.space().mesh()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        self.orbitals.eigenvalues()
    }
}

/// Per-mesh matrices that do not depend on the density.
struct MeshCache {
    mesh_id: u64,
    a: SparseOperator,
    b: SparseOperator,
    laplace: Option<SparseOperator>,
}

#[derive(Clone, Copy)]
enum Physics<'a> {
    Fixed(&'a dyn SingleParticleForm),
    KohnSham(&'a KohnShamProblem),
}

/// Density-dependent state of a Kohn-Sham run.
struct ScfState {
    rho: Density,
    v_h: DiscreteFunction,
}

struct Driver<'a> {
    physics: Physics<'a>,
    config: &'a ParoConfig,
    cache: Option<MeshCache>,
}

fn seconds(t: Instant, record: bool) -> f64 {
    if record {
        t.elapsed().as_secs_f64()
    } else {
        0.0
    }
}

impl<'a> Driver<'a> {
    fn cache(&mut self, space: &Arc<FeSpace>) -> Result<&MeshCache> {
        let id = space.mesh().id();
        if self.cache.as_ref().map(|c| c.mesh_id) != Some(id) {
            let b = assemble_mass(space);
            let (a, laplace) = match self.physics {
                Physics::Fixed(form) => (assemble_stiffness(space, form.diffusion(), form.potential())?, None),
                Physics::KohnSham(p) => (
                    p.fixed_operator(space)?,
                    Some(assemble_stiffness(space, &Diffusion::identity(), &Constant(0.0))?),
                ),
            };
            self.cache = Some(MeshCache { mesh_id: id, a, b, laplace });
        }
        Ok(self.cache.as_ref().expect("just filled"))
    }

    fn hartree(&mut self, rho: &Density, guess: Option<&DiscreteFunction>) -> Result<DiscreteFunction> {
        let tol = self.config.hartree_tol;
        let cache = self.cache(rho.function().space())?;
        let k = cache.laplace.as_ref().expect("Kohn-Sham cache holds the Laplacian");
        hartree_solve_with(k, &cache.b, rho, tol, guess)
    }

    /// Operators for the current form; Kohn-Sham forms are linearized at `state`.
    fn operators(&mut self, space: &Arc<FeSpace>, state: Option<&ScfState>) -> Result<Operators> {
        let physics_ks = match self.physics {
            Physics::KohnSham(p) => Some(p),
            Physics::Fixed(_) => None,
        };
        let cache = self.cache(space)?;
        let a = match (physics_ks, state) {
            (Some(p), Some(s)) => cache.a.add_scaled(&p.density_operator(&s.rho, Some(&s.v_h))?, 1.0)?,
            _ => cache.a.clone(),
        };
        Ok(Operators { space: space.clone(), a, b: cache.b.clone() })
    }

    fn indicators(&self, orbitals: &OrbitalSet, count: usize, state: Option<&ScfState>) -> Result<ErrorIndicators> {
        let sets = orbitals.orbitals()[..count]
            .iter()
            .zip(orbitals.eigenvalues())
            .map(|(u, &lambda)| {
                let rhs = Scaled(lambda, u);
                match (&self.physics, state) {
                    (Physics::Fixed(form), _) => estimate_source_residual(u, &rhs, form.diffusion(), form.potential()),
                    (Physics::KohnSham(p), Some(s)) => {
                        let v = p.effective_potential(&s.rho, Some(&s.v_h));
                        estimate_source_residual(u, &rhs, &Diffusion::Scalar(0.5), &v as &dyn ElementField)
                    }
                    (Physics::KohnSham(p), None) => {
                        estimate_source_residual(u, &rhs, &Diffusion::Scalar(0.5), p.external())
                    }
                }
            })
            .collect::<Result<Vec<_>>>()?;
        ErrorIndicators::elementwise_max(&sets)
    }

    fn run(&mut self, mesh: Arc<Mesh>) -> Result<ParoResult> {
        let config = self.config;
        config.validate()?;
        let (n, occupations, kohn_sham) = match self.physics {
            Physics::Fixed(_) => (config.orbitals, Vec::new(), false),
            Physics::KohnSham(p) => {
                if config.orbitals != p.orbital_count() {
                    return invalid(format!(
                        "{} electrons need {} orbitals, configuration asks for {}",
                        p.molecule().electrons(),
                        p.orbital_count(),
                        config.orbitals
                    ));
                }
                (p.orbital_count(), p.occupations().to_vec(), true)
            }
        };
        let domain = match self.physics {
            Physics::Fixed(f) => *f.domain(),
            Physics::KohnSham(p) => *p.domain(),
        };
        if *mesh.domain() != domain {
            return invalid("mesh and problem domains differ");
        }
        let k = config.block_size();
        let record = config.record_timings;

        let space0 = FeSpace::new(mesh);
        let ops0 = self.operators(&space0, None)?;
        let guess = initial_guess(&ops0, k)?;
        let mut current = guess.clone();
        let mut state: Option<ScfState> = None;
        let mut trace = Trace::new(n, kohn_sham);
        let mut previous_energy: Option<f64> = None;
        let mut stable = 0;
        let mut increases = 0;
        let mut restarts = 0;
        let mut converged = false;
        let mut energy = f64::NAN;
        let mut last_density = None;
        let mut iterations = 0;

        for iter in 0..config.max_iterations {
            iterations = iter + 1;
            let t_mesh = Instant::now();
            if let Physics::KohnSham(_) = self.physics {
                let rho_out = density_from_orbitals(&current.orbitals()[..n], &occupations)?;
                let (rho, guess_vh) = match state.take() {
                    None => (rho_out, None),
                    Some(s) => (s.rho.mix(&rho_out, config.mixing)?, Some(s.v_h)),
                };
                let v_h = self.hartree(&rho, guess_vh.as_ref())?;
                if rho.clamped() > 0 {
                    info!("iteration {iter}: {} negative density values clamped", rho.clamped());
                }
                state = Some(ScfState { rho, v_h });
            }

            // Step 2: estimate, mark, refine
            let space = current.space().clone();
            let eta = self.indicators(&current, n, state.as_ref())?;
            let eta_total = eta.total();
            let mut frozen = !config.refine || space.dof_count() >= config.max_dofs;
            if !frozen {
                let marked = match config.marking {
                    MarkingStrategy::Dorfler => dorfler_mark(&eta, config.theta)?,
                    MarkingStrategy::Maximum => maximum_mark(&eta, config.theta)?,
                    MarkingStrategy::Uniform => Marked { elements: (0..eta.len()).collect(), converged: false },
                };
                if marked.elements.is_empty() {
                    frozen = true;
                } else {
                    let mesh = bisect(space.mesh(), &marked.elements)?;
                    let fine = FeSpace::new(mesh);
                    current = current.prolongate(&fine)?;
                    if let Some(s) = state.take() {
                        let electrons: f64 = occupations.iter().sum();
                        let rho = s.rho.prolongate(&fine, electrons)?;
                        let guess_vh = s.v_h.prolongate(&fine)?;
                        let v_h = self.hartree(&rho, Some(&guess_vh))?;
                        state = Some(ScfState { rho, v_h });
                    }
                }
            }
            let space = current.space().clone();
            let t_meshgen = seconds(t_mesh, record);

            // Step 3: independent source problems
            let ops = self.operators(&space, state.as_ref())?;
            let t_src = Instant::now();
            let opts = SolveOptions {
                tol: config.cg_tol_at(iter),
                max_iter: config.cg_max_iter,
                parallel: config.parallel,
                multigrid: config.multigrid,
            };
            let candidates = source_solve_step(&current, &ops, &opts)?;
            let t_source = seconds(t_src, record);

            // Step 4: Rayleigh-Ritz
            let t_proj = Instant::now();
            let basis = match orthonormal_basis(&candidates, &ops.b, n, config.drop_tol) {
                Ok(b) => b,
                Err(Error::DegenerateSpan { rank, required }) => {
                    restarts += 1;
                    warn!("candidate span has rank {rank} < {required}; restart {restarts} from the initial guess");
                    if restarts > 3 {
                        return Err(Error::DegenerateSpan { rank, required });
                    }
                    current = guess.prolongate(&space)?;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let (ritz, density) = match (self.physics, &state) {
                (Physics::KohnSham(p), Some(s)) => {
                    let half: Vec<DiscreteFunction> = basis.vectors[..n]
                        .iter()
                        .map(|v| DiscreteFunction::new(space.clone(), v.clone()))
                        .collect::<Result<_>>()?;
                    let rho_half = density_from_orbitals(&half, &occupations)?;
                    let rho = s.rho.mix(&rho_half, config.mixing)?;
                    let v_h = self.hartree(&rho, Some(&s.v_h))?;
                    let a = self.cache(&space)?.a.add_scaled(&p.density_operator(&rho, Some(&v_h))?, 1.0)?;
                    let ritz = project(&basis, &space, &a, &ops.b)?;
                    (ritz, Some((rho, v_h)))
                }
                _ => (project(&basis, &space, &ops.a, &ops.b)?, None),
            };
            let t_project = seconds(t_proj, record);

            energy = match (self.physics, &density) {
                (Physics::KohnSham(p), Some((rho, v_h))) => {
                    total_energy(ritz.eigenvalues(), &occupations, rho, Some(v_h), p.xc(), p.molecule())?
                }
                _ => ritz.eigenvalues()[..n].iter().sum(),
            };
            debug!(
                "iteration {iter}: dofs {}, lambda {:?}, energy {energy:.12}, certificate {:e}",
                space.dof_count(),
                &ritz.eigenvalues()[..n],
                ritz.certificate()
            );
            trace.push(TraceRow {
                iteration: iter,
                dofs: space.dof_count(),
                eigenvalues: ritz.eigenvalues()[..n].to_vec(),
                total_energy: kohn_sham.then_some(energy),
                eta_total,
                t_meshgen,
                t_source,
                t_project,
            });
            current = ritz;
            last_density = density.map(|(rho, _)| rho);

            if let Some(prev) = previous_energy {
                let delta = energy - prev;
                stable = if delta.abs() < config.energy_tol { stable + 1 } else { 0 };
                increases = if kohn_sham && delta > 1e-12 * energy.abs().max(1.0) { increases + 1 } else { 0 };
                if increases >= 5 {
                    return Err(Error::Divergence { iteration: iter, mixing: config.mixing });
                }
            }
            previous_energy = Some(energy);
            if config.refine && eta_total < config.eta_tol {
                converged = true;
                break;
            }
            if frozen && stable >= 3 {
                converged = true;
                break;
            }
        }
        info!(
            "{} after {iterations} iterations: energy {energy:.10}, {} dofs",
            if converged { "converged" } else { "stopped" },
            current.space().dof_count()
        );
        Ok(ParoResult { orbitals: current, trace, converged, iterations, energy, density: last_density, restarts })
    }
}

/// Linear eigenproblem `a(u, v) = lambda (u, v)` starting from `mesh`.
pub fn paro_linear(problem: &dyn SingleParticleForm, mesh: Arc<Mesh>, config: &ParoConfig) -> Result<ParoResult> {
    Driver { physics: Physics::Fixed(problem), config, cache: None }.run(mesh)
}

/// Closed-shell Kohn-Sham problem with linear density mixing.
pub fn paro_kohn_sham(problem: &KohnShamProblem, mesh: Arc<Mesh>, config: &ParoConfig) -> Result<ParoResult> {
    Driver { physics: Physics::KohnSham(problem), config, cache: None }.run(mesh)
}

#[derive(Debug, Clone)]
pub struct ScfResult {
    pub energy: f64,
    pub eigenvalues: Vec<f64>,
    pub density: Density,
    pub iterations: usize,
    pub converged: bool,
}

/// Reference SCF on a fixed mesh: each step mixes the density, rebuilds the
/// Hamiltonian and solves for its lowest `N` eigenpairs directly.
pub fn baseline_scf(problem: &KohnShamProblem, mesh: Arc<Mesh>, config: &ParoConfig) -> Result<ScfResult> {
    config.validate()?;
    let mut driver = Driver { physics: Physics::KohnSham(problem), config, cache: None };
    let space = FeSpace::new(mesh);
    let n = problem.orbital_count();
    let occupations = problem.occupations().to_vec();
    let ops = driver.operators(&space, None)?;
    let first = baseline_geneig(&ops.a, &ops.b, n)?;
    let to_functions = |vectors: Vec<Vec<f64>>| -> Result<Vec<DiscreteFunction>> {
        vectors.into_iter().map(|v| DiscreteFunction::new(space.clone(), v)).collect()
    };
    let mut rho_out = density_from_orbitals(&to_functions(first.vectors)?, &occupations)?;
    let mut rho_in: Option<Density> = None;
    let mut v_h: Option<DiscreteFunction> = None;
    let mut previous: Option<f64> = None;
    let mut stable = 0;
    let mut increases = 0;
    for iter in 0..config.max_iterations {
        let rho = match rho_in.take() {
            None => rho_out.clone(),
            Some(r) => r.mix(&rho_out, config.mixing)?,
        };
        let vh = driver.hartree(&rho, v_h.as_ref())?;
        let state = ScfState { rho, v_h: vh };
        let ops = driver.operators(&space, Some(&state))?;
        let pairs = baseline_geneig(&ops.a, &ops.b, n)?;
        let energy = total_energy(&pairs.values, &occupations, &state.rho, Some(&state.v_h), problem.xc(), problem.molecule())?;
        debug!("baseline SCF {iter}: energy {energy:.12}");
        rho_out = density_from_orbitals(&to_functions(pairs.vectors)?, &occupations)?;
        if let Some(prev) = previous {
            let delta = energy - prev;
            stable = if delta.abs() < config.energy_tol { stable + 1 } else { 0 };
            increases = if delta > 1e-12 * energy.abs().max(1.0) { increases + 1 } else { 0 };
            if increases >= 5 {
                return Err(Error::Divergence { iteration: iter, mixing: config.mixing });
            }
        }
        previous = Some(energy);
        let ScfState { rho, v_h: vh } = state;
        if stable >= 3 {
            return Ok(ScfResult { energy, eigenvalues: pairs.values, density: rho, iterations: iter + 1, converged: true });
        }
        rho_in = Some(rho);
        v_h = Some(vh);
    }
    let rho = rho_in.expect("at least one iteration ran");
    Ok(ScfResult {
        energy: previous.unwrap_or(f64::NAN),
        eigenvalues: Vec::new(),
        density: rho,
        iterations: config.max_iterations,
        converged: false,
    })
}
