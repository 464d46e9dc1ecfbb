//! Self-checking suites behind `paro verify`. Every check reports the measured
//! value next to its threshold.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};

use crate::adapt::{dorfler_mark, maximum_mark, ErrorIndicators};
use crate::error::{Error, Result};
use crate::fem::{assemble_mass, FeSpace};
use crate::linalg::{baseline_geneig, dense_sym_geneig, dot, DenseSymPencil, SparseOperator};
use crate::mesh::{bisect, create_box_mesh, BoxDomain, Mesh};
use crate::model::{KohnShamProblem, LinearProblem, Molecule, SchrodingerProblem, SingleParticleForm, XcKind};
use crate::paro::{
    baseline_scf, initial_guess, operators_for, paro_kohn_sham, paro_linear, source_solve_step, theorem_a1_probe,
    ParoConfig, SolveOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Analytic,
    Oracle,
    Marking,
    TheoremA1,
    Scaling,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Analytic, Suite::Oracle, Suite::Marking, Suite::TheoremA1, Suite::Scaling];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Analytic => "analytic",
            Suite::Oracle => "oracle",
            Suite::Marking => "marking",
            Suite::TheoremA1 => "theorem-a1",
            Suite::Scaling => "scaling",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|suite| suite.name() == s).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown suite `{s}`; expected one of analytic, oracle, marking, theorem-a1, scaling"
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub comparison: Comparison,
    /// Extra `key=value` columns.
    pub details: Vec<(String, f64)>,
}

impl Check {
    fn at_most(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self { name: name.into(), measured, threshold, comparison: Comparison::AtMost, details: Vec::new() }
    }

    fn at_least(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self { name: name.into(), measured, threshold, comparison: Comparison::AtLeast, details: Vec::new() }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.details.push((key.to_string(), value));
        self
    }

    pub fn passed(&self) -> bool {
        match self.comparison {
            Comparison::AtMost => self.measured <= self.threshold,
            Comparison::AtLeast => self.measured >= self.threshold,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

impl fmt::Display for Report {
    /// One line per check: `suite=.. check=.. measured=.. threshold=.. [key=value..] result=PASS|FAIL`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let op = match c.comparison {
                Comparison::AtMost => "<=",
                Comparison::AtLeast => ">=",
            };
            write!(
                f,
                "suite={} check={} measured={:.6e} threshold={}{:.6e}",
                self.suite.name(),
                c.name,
                c.measured,
                op,
                c.threshold
            )?;
            for (k, v) in &c.details {
                write!(f, " {k}={v:.10e}")?;
            }
            writeln!(f, " result={}", if c.passed() { "PASS" } else { "FAIL" })?;
        }
        writeln!(f, "suite={} result={}", self.suite.name(), if self.passed() { "PASS" } else { "FAIL" })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: 2024 }
    }
}

pub fn run_suite(suite: Suite, options: &VerifyOptions) -> Result<Report> {
    let checks = match suite {
        Suite::Analytic => analytic()?,
        Suite::Oracle => oracle()?,
        Suite::Marking => marking(options.seed)?,
        Suite::TheoremA1 => theorem_a1(options.seed)?,
        Suite::Scaling => scaling()?,
    };
    Ok(Report { suite, checks })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Sine of the largest principal angle between the spans of two
/// `B`-orthonormal sets, `u` spanning at most the dimension of `v`.
pub fn subspace_sine(b: &SparseOperator, u: &[Vec<f64>], v: &[Vec<f64>]) -> f64 {
    let bv: Vec<Vec<f64>> = v.iter().map(|x| b.mul_vec(x)).collect();
    let residuals: Vec<Vec<f64>> = u
        .iter()
        .map(|ui| {
            let mut r = ui.clone();
            for (vj, bvj) in v.iter().zip(&bv) {
                let c = dot(bvj, ui);
                r.iter_mut().zip(vj).for_each(|(ri, x)| *ri -= c * x);
            }
            r
        })
        .collect();
    let br: Vec<Vec<f64>> = residuals.iter().map(|r| b.mul_vec(r)).collect();
    let k = u.len();
    let s = DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(&residuals[i], &br[j]) + dot(&residuals[j], &br[i])));
    SymmetricEigen::new(s).eigenvalues.iter().fold(0.0_f64, |m, &e| m.max(e)).sqrt()
}

fn relative(computed: f64, exact: f64) -> f64 {
    (computed - exact).abs() / exact.abs()
}

fn spectrum_rows(prefix: &str, computed: &[f64], exact: &[f64], tol: f64, dofs: usize) -> Vec<Check> {
    computed
        .iter()
        .zip(exact)
        .enumerate()
        .map(|(i, (&c, &e))| {
            Check::at_most(format!("{prefix}_lambda_{}", i + 1), relative(c, e), tol)
                .with("computed", c)
                .with("exact", e)
                .with("dofs", dofs as f64)
        })
        .collect()
}

fn adaptive(problem: &dyn SingleParticleForm, subdivisions: usize, orbitals: usize, max_dofs: usize) -> Result<(Vec<f64>, usize)> {
    let mesh = create_box_mesh(*problem.domain(), &[subdivisions])?;
    let config = ParoConfig { orbitals, max_dofs, eta_tol: 1e-12, max_iterations: 80, ..Default::default() };
    let r = paro_linear(problem, mesh, &config)?;
    let last = r.trace.last().ok_or_else(|| Error::InvalidArgument("empty trace".into()))?;
    Ok((last.eigenvalues.clone(), last.dofs))
}

fn analytic() -> Result<Vec<Check>> {
    let pi2 = PI * PI;
    let mut checks = Vec::new();

    let square = LinearProblem::laplace(BoxDomain::unit(2));
    let (l, dofs) = adaptive(&square, 8, 3, 20_000)?;
    checks.extend(spectrum_rows("square", &l, &[2.0 * pi2, 5.0 * pi2, 5.0 * pi2], 5e-3, dofs));
    checks.push(Check::at_most("square_double_eigenvalue_split", (l[2] - l[1]) / l[1], 1e-3));

    let cube = LinearProblem::laplace(BoxDomain::unit(3));
    let (l, dofs) = adaptive(&cube, 4, 1, 20_000)?;
    checks.extend(spectrum_rows("cube", &l, &[3.0 * pi2], 1e-2, dofs));

    let oscillator = LinearProblem::harmonic_oscillator(BoxDomain::cube(2, -8.0, 8.0)?);
    let (l, dofs) = adaptive(&oscillator, 8, 6, 20_000)?;
    checks.extend(spectrum_rows("oscillator", &l, &[1.0, 2.0, 2.0, 3.0, 3.0, 3.0], 1e-2, dofs));

    let hydrogen = SchrodingerProblem::hydrogen(BoxDomain::cube(3, -10.0, 10.0)?)?;
    let (l, dofs) = adaptive(&hydrogen, 4, 1, 30_000)?;
    checks.extend(spectrum_rows("hydrogen", &l, &[-0.5], 2e-2, dofs));
    Ok(checks)
}

fn oracle() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let problem = LinearProblem::laplace(BoxDomain::unit(2));
    let mesh = create_box_mesh(BoxDomain::unit(2), &[12])?;
    let space = FeSpace::new(mesh.clone());
    let ops = operators_for(&problem, &space)?;
    let n = 3;
    let reference = baseline_geneig(&ops.a, &ops.b, n)?;
    let config = ParoConfig {
        orbitals: n,
        refine: false,
        energy_tol: 1e-13,
        cg_tol: 1e-12,
        cg_tol_start: 1e-12,
        max_iterations: 50,
        ..Default::default()
    };
    let r = paro_linear(&problem, mesh, &config)?;
    let discrepancy = r.eigenvalues()[..n]
        .iter()
        .zip(&reference.values)
        .map(|(a, b)| relative(*a, *b))
        .fold(0.0, f64::max);
    checks.push(
        Check::at_most("linear_eigenvalue_discrepancy", discrepancy, 1e-8)
            .with("dofs", space.dof_count() as f64)
            .with("iterations", r.iterations as f64),
    );
    let u: Vec<Vec<f64>> = r.orbitals.orbitals()[..n].iter().map(|f| f.coefficients().to_vec()).collect();
    checks.push(Check::at_most("linear_subspace_angle", subspace_sine(&ops.b, &u, &reference.vectors).asin(), 1e-6));

    let domain = BoxDomain::cube(3, -6.0, 6.0)?;
    let ks = KohnShamProblem::new(Molecule::helium(), domain, XcKind::Lda, 0.0)?;
    let mesh = create_box_mesh(domain, &[8])?;
    let config = ParoConfig { refine: false, energy_tol: 1e-10, max_iterations: 200, ..Default::default() };
    let paro = paro_kohn_sham(&ks, mesh.clone(), &config)?;
    let base = baseline_scf(&ks, mesh, &config)?;
    checks.push(
        Check::at_most("kohn_sham_energy_discrepancy", relative(paro.energy, base.energy), 1e-6)
            .with("paro", paro.energy)
            .with("baseline", base.energy),
    );
    let rho = paro.density.as_ref().ok_or_else(|| Error::InvalidArgument("no density".into()))?;
    let diff: Vec<f64> = rho
        .function()
        .coefficients()
        .iter()
        .zip(base.density.function().coefficients())
        .map(|(a, b)| a - b)
        .collect();
    let mass = assemble_mass(base.density.function().space());
    checks.push(Check::at_most("kohn_sham_density_l2", mass.inner(&diff, &diff).sqrt(), 1e-5));
    Ok(checks)
}

fn marking(seed: u64) -> Result<Vec<Check>> {
    let mesh = create_box_mesh(BoxDomain::unit(2), &[8])?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (mut inequality, mut minimality, mut threshold, mut scaling) = (0usize, 0usize, 0usize, 0usize);
    let trials = 1000;
    for _ in 0..trials {
        let eta: Vec<f64> = (0..mesh.num_elements())
            .map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..1.0_f64).powi(3) })
            .collect();
        let theta = rng.gen_range(0.05..0.95);
        let ind = ErrorIndicators::new(&mesh, eta.clone())?;
        let total: f64 = eta.iter().map(|v| v * v).sum();
        let d = dorfler_mark(&ind, theta)?;
        let marked: f64 = d.elements.iter().map(|&i| eta[i] * eta[i]).sum();
        if marked < theta * total {
            inequality += 1;
        }
        let mut sorted: Vec<f64> = eta.iter().map(|v| v * v).collect();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let best_smaller: f64 = sorted[..d.elements.len() - 1].iter().sum();
        if best_smaller >= theta * total {
            minimality += 1;
        }
        let m = maximum_mark(&ind, theta)?;
        let max = eta.iter().fold(0.0_f64, |a, &b| a.max(b));
        let expected: Vec<usize> = (0..eta.len()).filter(|&i| eta[i] >= theta * max).collect();
        if m.elements != expected {
            threshold += 1;
        }
        for s in [0.125, 4.0, 1024.0] {
            let scaled = ErrorIndicators::new(&mesh, eta.iter().map(|v| v * s).collect())?;
            if dorfler_mark(&scaled, theta)? != d || maximum_mark(&scaled, theta)? != m {
                scaling += 1;
            }
        }
    }
    Ok(vec![
        Check::at_most("dorfler_inequality_violations", inequality as f64, 0.0).with("trials", trials as f64),
        Check::at_most("dorfler_minimality_violations", minimality as f64, 0.0).with("trials", trials as f64),
        Check::at_most("maximum_threshold_mismatches", threshold as f64, 0.0).with("trials", trials as f64),
        Check::at_most("scaling_mismatches", scaling as f64, 0.0).with("trials", trials as f64),
    ])
}

fn theorem_a1(seed: u64) -> Result<Vec<Check>> {
    let problem = LinearProblem::laplace(BoxDomain::unit(2));
    let mesh = create_box_mesh(BoxDomain::unit(2), &[16])?;
    let cg_tol = 1e-12;
    let zero = theorem_a1_probe(&problem, mesh.clone(), 3, 0.0, seed, cg_tol)?;
    let eps = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    let mut d1 = Vec::new();
    for &e in &eps {
        d1.push(theorem_a1_probe(&problem, mesh.clone(), 3, e, seed, cg_tol)?.d1);
    }
    let half = theorem_a1_probe(&problem, mesh, 3, 5e-4, seed, cg_tol)?.d1;
    let slope = loglog_slope(&eps, &d1);
    Ok(vec![
        Check::at_most("zero_perturbation_d1", zero.d1, 100.0 * cg_tol),
        Check::at_least("halving_ratio", d1[1] / half, 1.5),
        Check::at_least("slope_lower", slope, 0.8),
        Check::at_most("slope_upper", slope, 1.2),
    ])
}

fn uniform_refinements(mesh: &std::sync::Arc<Mesh>, rounds: usize) -> Result<std::sync::Arc<Mesh>> {
    let mut m = mesh.clone();
    for _ in 0..rounds * mesh.dim() {
        let all: Vec<usize> = (0..m.num_elements()).collect();
        m = bisect(&m, &all)?;
    }
    Ok(m)
}

/// Minimum wall time of `f` over `repeats` runs, in seconds.
pub fn min_time<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..repeats {
        let t = Instant::now();
        f()?;
        best = best.min(t.elapsed().as_secs_f64());
    }
    Ok(best)
}

fn scaling() -> Result<Vec<Check>> {
    let problem = LinearProblem::laplace(BoxDomain::unit(2));
    let coarse = create_box_mesh(BoxDomain::unit(2), &[8])?;
    let coarse_ops = operators_for(&problem, &FeSpace::new(coarse.clone()))?;
    let guess = initial_guess(&coarse_ops, 3)?;
    let (mut dofs, mut step3, mut dense) = (Vec::new(), Vec::new(), Vec::new());
    let mut determinism: f64 = 0.0;
    for rounds in [2, 3, 4] {
        let space = FeSpace::new(uniform_refinements(&coarse, rounds)?);
        let ops = operators_for(&problem, &space)?;
        let start = guess.prolongate(&space)?;
        let opts = SolveOptions { tol: 1e-8, max_iter: 10_000, parallel: false, multigrid: true };
        step3.push(min_time(3, || source_solve_step(&start, &ops, &opts))?);
        let serial = source_solve_step(&start, &ops, &opts)?;
        let parallel = source_solve_step(&start, &ops, &SolveOptions { parallel: true, ..opts })?;
        for (s, p) in serial.iter().zip(&parallel) {
            for (a, b) in s.coefficients().iter().zip(p.coefficients()) {
                determinism = determinism.max((a - b).abs());
            }
        }
        let k = serial.len();
        let av: Vec<Vec<f64>> = serial.iter().map(|f| ops.a.mul_vec(f.coefficients())).collect();
        let bv: Vec<Vec<f64>> = serial.iter().map(|f| ops.b.mul_vec(f.coefficients())).collect();
        let c = |i: usize| serial[i].coefficients();
        let at = DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(c(i), &av[j]) + dot(c(j), &av[i])));
        let bt = DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(c(i), &bv[j]) + dot(c(j), &bv[i])));
        let pencil = DenseSymPencil::new(at, bt)?;
        dense.push(min_time(5, || {
            for _ in 0..200 {
                dense_sym_geneig(&pencil)?;
            }
            Ok(())
        })?);
        dofs.push(space.dof_count() as f64);
    }
    let step3_slope = loglog_slope(&dofs, &step3);
    let dense_slope = loglog_slope(&dofs, &dense);

    let mesh = create_box_mesh(BoxDomain::unit(2), &[6])?;
    let config = ParoConfig { orbitals: 2, max_dofs: 3000, record_timings: false, parallel: false, ..Default::default() };
    let first = paro_linear(&problem, mesh.clone(), &config)?.trace.to_csv();
    let second = paro_linear(&problem, mesh, &config)?.trace.to_csv();
    let identical = if first == second { 0.0 } else { 1.0 };
    Ok(vec![
        Check::at_most("step3_time_slope", step3_slope, 1.3).with("dofs_max", dofs[2]).with("seconds_max", step3[2]),
        Check::at_most("dense_solve_time_slope", dense_slope.abs(), 0.2),
        Check::at_most("parallel_serial_max_difference", determinism, 1e-12),
        Check::at_most("serial_csv_differs", identical, 0.0),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("speed".parse::<Suite>().is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 10.0, 100.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.25)).collect();
        assert!((loglog_slope(&x, &y) - 1.25).abs() < 1e-12);
    }

    #[test]
    fn subspace_sine_of_rotated_basis() {
        let b = SparseOperator::identity(3);
        let v = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        let t: f64 = 0.1;
        let u = vec![vec![t.cos(), 0.0, t.sin()]];
        assert!((subspace_sine(&b, &u, &v) - t.sin()).abs() < 1e-14);
        let same = vec![vec![0.6, 0.8, 0.0]];
        assert!(subspace_sine(&b, &same, &v) < 1e-15);
    }

    #[test]
    fn report_lines_are_machine_readable() {
        let report = Report {
            suite: Suite::Marking,
            checks: vec![Check::at_most("x", 0.0, 0.0), Check::at_least("y", 1.0, 2.0).with("k", 3.0)],
        };
        let text = report.to_string();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("suite=marking check=x measured=") && lines[0].ends_with("result=PASS"));
        assert!(lines[1].contains("k=3.") && lines[1].ends_with("result=FAIL"));
        assert_eq!(lines[2], "suite=marking result=FAIL");
    }

    #[test]
    fn marking_suite_passes() {
        let report = run_suite(Suite::Marking, &VerifyOptions::default()).unwrap();
        assert!(report.passed(), "{report}");
    }
}
