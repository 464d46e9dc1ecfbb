//! Flat `key = value` run configuration.
//!
//! ```text
//! # comments start with '#'
//! problem = laplace-square
//! orbitals = 3
//! max_dofs = 20000
//! ```
//!
//! Keys: `problem` (laplace-square, laplace-cube, oscillator, hydrogen,
//! molecule), `molecule_file`, `box_min`, `box_max`, `subdivisions`, `xc`
//! (none, exchange, lda), `smoothing`, `output`, `workers`, and the solver keys
//! `orbitals`, `augmentation`, `marking` (dorfler, maximum, uniform), `theta`,
//! `refine`, `max_dofs`, `cg_tol`, `cg_tol_start`, `cg_max_iter`,
//! `max_iterations`, `mixing`, `energy_tol`, `eta_tol`, `drop_tol`,
//! `hartree_tol`, `multigrid`, `parallel`, `seed`, `record_timings`.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{create_box_mesh, BoxDomain, Mesh};
use crate::model::{KohnShamProblem, LinearProblem, Molecule, SchrodingerProblem, SingleParticleForm, XcKind};
use crate::paro::{paro_kohn_sham, paro_linear, MarkingStrategy, ParoConfig, ParoResult};

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemKind {
    LaplaceSquare,
    LaplaceCube,
    /// `-1/2 Laplace + 1/2 |x|^2` in two dimensions.
    Oscillator,
    Hydrogen,
    /// Closed-shell Kohn-Sham problem for the molecule in the given file.
    Molecule(PathBuf),
}

impl ProblemKind {
    pub fn dim(&self) -> usize {
        match self {
            ProblemKind::LaplaceSquare | ProblemKind::Oscillator => 2,
            _ => 3,
        }
    }

    fn default_box(&self) -> (f64, f64) {
        match self {
            ProblemKind::LaplaceSquare | ProblemKind::LaplaceCube => (0.0, 1.0),
            ProblemKind::Oscillator => (-8.0, 8.0),
            ProblemKind::Hydrogen | ProblemKind::Molecule(_) => (-10.0, 10.0),
        }
    }

    fn default_subdivisions(&self) -> usize {
        if self.dim() == 2 {
            8
        } else {
            4
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::LaplaceSquare => "laplace-square",
            ProblemKind::LaplaceCube => "laplace-cube",
            ProblemKind::Oscillator => "oscillator",
            ProblemKind::Hydrogen => "hydrogen",
            ProblemKind::Molecule(_) => "molecule",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub box_min: f64,
    pub box_max: f64,
    pub subdivisions: usize,
    pub xc: XcKind,
    /// Core radius of the smoothed nuclear potential; 0 keeps the bare Coulomb form.
    pub smoothing: f64,
    pub output: PathBuf,
    /// Rayon pool size; `Some(1)` is the deterministic serial mode.
    pub workers: Option<usize>,
    pub paro: ParoConfig,
    orbitals_given: bool,
    timings_given: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let problem = ProblemKind::LaplaceSquare;
        let (box_min, box_max) = problem.default_box();
        Self {
            subdivisions: problem.default_subdivisions(),
            problem,
            box_min,
            box_max,
            xc: XcKind::Lda,
            smoothing: 0.0,
            output: PathBuf::from("paro-out"),
            workers: None,
            paro: ParoConfig::default(),
            orbitals_given: false,
            timings_given: false,
        }
    }
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Parse { line, message: format!("bad value `{value}` for key `{key}`") })
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Parse { line, message: format!("bad value `{value}` for key `{key}`, expected true or false") }),
    }
}

impl RunConfig {
    /// Parse configuration text. A relative `molecule_file` is kept as written.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut problem_name: Option<String> = None;
        let mut molecule_file: Option<PathBuf> = None;
        let mut box_min = None;
        let mut box_max = None;
        let mut subdivisions = None;
        let mut seen: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Parse { line, message: format!("expected `key = value`, got `{content}`") })?;
            if seen.iter().any(|k| k == key) {
                return Err(Error::Parse { line, message: format!("duplicate key `{key}`") });
            }
            seen.push(key.to_string());
            let p = &mut cfg.paro;
            match key {
                "problem" => problem_name = Some(value.to_string()),
                "molecule_file" => molecule_file = Some(PathBuf::from(value)),
                "box_min" => box_min = Some(parse_value(line, key, value)?),
                "box_max" => box_max = Some(parse_value(line, key, value)?),
                "subdivisions" => subdivisions = Some(parse_value(line, key, value)?),
                "xc" => {
                    cfg.xc = match value {
                        "none" => XcKind::None,
                        "exchange" => XcKind::Exchange,
                        "lda" => XcKind::Lda,
                        _ => {
                            return Err(Error::Parse {
                                line,
                                message: format!("bad value `{value}` for key `xc`, expected none, exchange or lda"),
                            })
                        }
                    }
                }
                "smoothing" => cfg.smoothing = parse_value(line, key, value)?,
                "output" => cfg.output = PathBuf::from(value),
                "workers" => cfg.workers = Some(parse_value(line, key, value)?),
                "orbitals" => {
                    p.orbitals = parse_value(line, key, value)?;
                    cfg.orbitals_given = true;
                }
                "augmentation" => p.augmentation = parse_value(line, key, value)?,
                "marking" => {
                    p.marking = match value {
                        "dorfler" => MarkingStrategy::Dorfler,
                        "maximum" => MarkingStrategy::Maximum,
                        "uniform" => MarkingStrategy::Uniform,
                        _ => {
                            return Err(Error::Parse {
                                line,
                                message: format!(
                                    "bad value `{value}` for key `marking`, expected dorfler, maximum or uniform"
                                ),
                            })
                        }
                    }
                }
                "theta" => p.theta = parse_value(line, key, value)?,
                "refine" => p.refine = parse_bool(line, key, value)?,
                "max_dofs" => p.max_dofs = parse_value(line, key, value)?,
                "cg_tol" => p.cg_tol = parse_value(line, key, value)?,
                "cg_tol_start" => p.cg_tol_start = parse_value(line, key, value)?,
                "cg_max_iter" => p.cg_max_iter = parse_value(line, key, value)?,
                "max_iterations" => p.max_iterations = parse_value(line, key, value)?,
                "mixing" => p.mixing = parse_value(line, key, value)?,
                "energy_tol" => p.energy_tol = parse_value(line, key, value)?,
                "eta_tol" => p.eta_tol = parse_value(line, key, value)?,
                "drop_tol" => p.drop_tol = parse_value(line, key, value)?,
                "hartree_tol" => p.hartree_tol = parse_value(line, key, value)?,
                "multigrid" => p.multigrid = parse_bool(line, key, value)?,
                "parallel" => p.parallel = parse_bool(line, key, value)?,
                "seed" => p.seed = parse_value(line, key, value)?,
                "record_timings" => {
                    p.record_timings = parse_bool(line, key, value)?;
                    cfg.timings_given = true;
                }
                _ => return Err(Error::Parse { line, message: format!("unknown key `{key}`") }),
            }
        }
        cfg.problem = match problem_name.as_deref() {
            None | Some("laplace-square") => ProblemKind::LaplaceSquare,
            Some("laplace-cube") => ProblemKind::LaplaceCube,
            Some("oscillator") => ProblemKind::Oscillator,
            Some("hydrogen") => ProblemKind::Hydrogen,
            Some("molecule") => ProblemKind::Molecule(molecule_file.take().ok_or_else(|| Error::Parse {
                line: 0,
                message: "problem `molecule` needs `molecule_file`".into(),
            })?),
            Some(other) => {
                let line = text.lines().position(|l| l.trim_start().starts_with("problem")).map_or(0, |i| i + 1);
                return Err(Error::Parse { line, message: format!("unknown problem `{other}`") });
            }
        };
        if molecule_file.is_some() {
            let line = text.lines().position(|l| l.trim_start().starts_with("molecule_file")).map_or(0, |i| i + 1);
            return Err(Error::Parse { line, message: "`molecule_file` is only used with `problem = molecule`".into() });
        }
        let (lo, hi) = cfg.problem.default_box();
        cfg.box_min = box_min.unwrap_or(lo);
        cfg.box_max = box_max.unwrap_or(hi);
        cfg.subdivisions = subdivisions.unwrap_or_else(|| cfg.problem.default_subdivisions());
        cfg.paro.validate()?;
        Ok(cfg)
    }

    /// Read a configuration file; `molecule_file` and `output` are resolved
    /// against the file's directory and the molecule file must exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let ProblemKind::Molecule(file) = &mut cfg.problem {
            if file.is_relative() {
                *file = base.join(&*file);
            }
            if !file.is_file() {
                return Err(Error::InvalidArgument(format!("molecule file {} does not exist", file.display())));
            }
        }
        if cfg.output.is_relative() {
            cfg.output = base.join(&cfg.output);
        }
        Ok(cfg)
    }

    pub fn domain(&self) -> Result<BoxDomain> {
        BoxDomain::cube(self.problem.dim(), self.box_min, self.box_max)
    }

    pub fn initial_mesh(&self) -> Result<Arc<Mesh>> {
        create_box_mesh(self.domain()?, &[self.subdivisions])
    }

    pub fn problem(&self) -> Result<Problem> {
        let domain = self.domain()?;
        Ok(match &self.problem {
            ProblemKind::LaplaceSquare | ProblemKind::LaplaceCube => Problem::Linear(LinearProblem::laplace(domain)),
            ProblemKind::Oscillator => Problem::Linear(LinearProblem::harmonic_oscillator(domain)),
            ProblemKind::Hydrogen => Problem::Schrodinger(SchrodingerProblem::new(
                domain,
                &Molecule::hydrogen(),
                self.smoothing,
            )?),
            ProblemKind::Molecule(path) => {
                let molecule = Molecule::parse(&std::fs::read_to_string(path)?)?;
                Problem::KohnSham(KohnShamProblem::new(molecule, domain, self.xc, self.smoothing)?)
            }
        })
    }

    /// Solver settings with the orbital count taken from the molecule in
    /// Kohn-Sham runs unless given explicitly. With one worker the Step-3
    /// solves run serially and timings are left out of the trace (unless
    /// `record_timings` is set), so repeated runs write identical files.
    pub fn solver_config(&self, problem: &Problem) -> ParoConfig {
        let mut p = self.paro.clone();
        if self.workers == Some(1) {
            p.parallel = false;
            if !self.timings_given {
                p.record_timings = false;
            }
        }
        if let Problem::KohnSham(ks) = problem {
            if !self.orbitals_given {
                p.orbitals = ks.orbital_count();
            }
        }
        p
    }

    /// Build the problem and mesh and run the matching driver.
    pub fn run(&self) -> Result<ParoResult> {
        let problem = self.problem()?;
        let config = self.solver_config(&problem);
        let mesh = self.initial_mesh()?;
        match &problem {
            Problem::Linear(p) => paro_linear(p, mesh, &config),
            Problem::Schrodinger(p) => paro_linear(p, mesh, &config),
            Problem::KohnSham(p) => paro_kohn_sham(p, mesh, &config),
        }
    }
}

pub enum Problem {
    Linear(LinearProblem),
    Schrodinger(SchrodingerProblem),
    KohnSham(KohnShamProblem),
}

impl Problem {
    pub fn is_kohn_sham(&self) -> bool {
        matches!(self, Problem::KohnSham(_))
    }

    pub fn single_particle(&self) -> Option<&dyn SingleParticleForm> {
        match self {
            Problem::Linear(p) => Some(p),
            Problem::Schrodinger(p) => Some(p),
            Problem::KohnSham(_) => None,
        }
    }
}
