use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{fields::check_spd, Diffusion, ElementField, ElementPoint};
use crate::mesh::BoxDomain;
use crate::model::{ExternalPotential, Molecule};
use crate::Point;

/// `a(u, v) = (A grad u, grad v) + (V u, v)` with a position-dependent potential.
pub trait SingleParticleForm: Send + Sync {
    fn domain(&self) -> &BoxDomain;
    fn diffusion(&self) -> &Diffusion;
    fn potential(&self) -> &dyn ElementField;
}

struct PointField {
    f: Arc<dyn Fn(&Point) -> f64 + Send + Sync>,
}

impl ElementField for PointField {
    fn value(&self, at: &ElementPoint<'_>) -> f64 {
        (self.f)(&at.x)
    }
}

/// `L u = -div(A grad u) + c u` with `A` uniformly SPD and `c >= 0`.
pub struct LinearProblem {
    domain: BoxDomain,
    diffusion: Diffusion,
    reaction: PointField,
}

/// Sample points per axis used to validate coefficients.
const SAMPLES: usize = 9;

impl LinearProblem {
    pub fn new(
        domain: BoxDomain,
        diffusion: Diffusion,
        reaction: impl Fn(&Point) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let dim = domain.dim;
        let count = SAMPLES.pow(dim as u32);
        for k in 0..count {
            let mut x = [0.0; 3];
            let mut r = k;
            for (axis, xi) in x.iter_mut().enumerate().take(dim) {
                let t = (r % SAMPLES) as f64 / (SAMPLES - 1) as f64;
                r /= SAMPLES;
                *xi = domain.lo[axis] + t * (domain.hi[axis] - domain.lo[axis]);
            }
            let c = reaction(&x);
            if !(c >= 0.0) || !c.is_finite() {
                return Err(Error::InvalidCoefficient { element: 0, reason: format!("reaction c({x:?}) = {c} is not >= 0") });
            }
            check_spd(&diffusion.at(&x), dim)
                .map_err(|reason| Error::InvalidCoefficient { element: 0, reason: format!("{reason} at {x:?}") })?;
        }
        Ok(Self { domain, diffusion, reaction: PointField { f: Arc::new(reaction) } })
    }

    /// `-Laplace u` on the box.
    pub fn laplace(domain: BoxDomain) -> Self {
        Self::new(domain, Diffusion::identity(), |_| 0.0).expect("Laplacian coefficients are valid")
    }

    /// `-1/2 Laplace u + 1/2 |x|^2 u`.
    pub fn harmonic_oscillator(domain: BoxDomain) -> Self {
        Self::new(domain, Diffusion::Scalar(0.5), |x| 0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]))
            .expect("oscillator coefficients are valid")
    }

    pub fn reaction_at(&self, x: &Point) -> f64 {
        (self.reaction.f)(x)
    }
}

impl SingleParticleForm for LinearProblem {
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn diffusion(&self) -> &Diffusion {
        &self.diffusion
    }

    fn potential(&self) -> &dyn ElementField {
        &self.reaction
    }
}

/// `-1/2 Laplace u + V_ext u` for a fixed set of nuclei and no electron
/// interaction (the hydrogen-like case).
pub struct SchrodingerProblem {
    domain: BoxDomain,
    diffusion: Diffusion,
    potential: ExternalPotential,
}

impl SchrodingerProblem {
    pub fn new(domain: BoxDomain, molecule: &Molecule, smoothing: f64) -> Result<Self> {
        molecule.check_inside(&domain)?;
        Ok(Self { domain, diffusion: Diffusion::Scalar(0.5), potential: ExternalPotential::new(molecule, smoothing)? })
    }

    pub fn hydrogen(domain: BoxDomain) -> Result<Self> {
        Self::new(domain, &Molecule::hydrogen(), 0.0)
    }
}

impl SingleParticleForm for SchrodingerProblem {
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn diffusion(&self) -> &Diffusion {
        &self.diffusion
    }

    fn potential(&self) -> &dyn ElementField {
        &self.potential
    }
}
