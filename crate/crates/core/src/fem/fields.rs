//! Coefficient fields evaluated at element quadrature points.

use std::sync::Arc;

use super::DiscreteFunction;
use crate::mesh::Mesh;
use crate::Point;

/// A quadrature point inside a specific element.
#[derive(Debug, Clone, Copy)]
pub struct ElementPoint<'a> {
    pub mesh: &'a Mesh,
    pub element: usize,
    pub bary: &'a [f64; 4],
    pub x: Point,
}

/// Scalar field that can be sampled inside mesh elements.
pub trait ElementField: Sync {
    fn value(&self, at: &ElementPoint<'_>) -> f64;

    /// Points where the field is singular; elements containing them get a
    /// refined quadrature rule.
    fn singular_points(&self) -> Vec<Point> {
        Vec::new()
    }

    /// Mesh the field is tied to, if any.
    fn mesh_id(&self) -> Option<u64> {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Constant(pub f64);

impl ElementField for Constant {
    fn value(&self, _: &ElementPoint<'_>) -> f64 {
        self.0
    }
}

/// Field defined by a closure of position.
pub struct FnField<F> {
    f: F,
    singular: Vec<Point>,
}

impl<F: Fn(&Point) -> f64 + Sync> FnField<F> {
    pub fn new(f: F) -> Self {
        Self { f, singular: Vec::new() }
    }

    pub fn with_singularities(f: F, singular: Vec<Point>) -> Self {
        Self { f, singular }
    }
}

impl<F: Fn(&Point) -> f64 + Sync> ElementField for FnField<F> {
    fn value(&self, at: &ElementPoint<'_>) -> f64 {
        (self.f)(&at.x)
    }

    fn singular_points(&self) -> Vec<Point> {
        self.singular.clone()
    }
}

impl ElementField for DiscreteFunction {
    fn value(&self, at: &ElementPoint<'_>) -> f64 {
        self.value_in_element(at.element, at.bary)
    }

    fn mesh_id(&self) -> Option<u64> {
        Some(self.mesh().id())
    }
}

/// Pointwise sum of fields.
pub struct SumField<'a>(pub Vec<&'a dyn ElementField>);

impl ElementField for SumField<'_> {
    fn value(&self, at: &ElementPoint<'_>) -> f64 {
        self.0.iter().map(|f| f.value(at)).sum()
    }

    fn singular_points(&self) -> Vec<Point> {
        self.0.iter().flat_map(|f| f.singular_points()).collect()
    }

    fn mesh_id(&self) -> Option<u64> {
        self.0.iter().find_map(|f| f.mesh_id())
    }
}

/// `factor * field`
pub struct Scaled<'a>(pub f64, pub &'a dyn ElementField);

impl ElementField for Scaled<'_> {
    fn value(&self, at: &ElementPoint<'_>) -> f64 {
        self.0 * self.1.value(at)
    }

    fn singular_points(&self) -> Vec<Point> {
        self.1.singular_points()
    }

    fn mesh_id(&self) -> Option<u64> {
        self.1.mesh_id()
    }
}

pub type Tensor = [[f64; 3]; 3];

/// Diffusion coefficient `A(x)` of the form `(A grad u, grad v)`.
#[derive(Clone)]
pub enum Diffusion {
    /// `a * I`
    Scalar(f64),
    Field(Arc<dyn Fn(&Point) -> Tensor + Send + Sync>),
}

impl Diffusion {
    pub fn identity() -> Self {
        Diffusion::Scalar(1.0)
    }

    pub fn at(&self, x: &Point) -> Tensor {
        match self {
            Diffusion::Scalar(a) => [[*a, 0.0, 0.0], [0.0, *a, 0.0], [0.0, 0.0, *a]],
            Diffusion::Field(f) => f(x),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Diffusion::Scalar(_))
    }
}

impl std::fmt::Debug for Diffusion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Diffusion::Scalar(a) => write!(f, "Diffusion::Scalar({a})"),
            Diffusion::Field(_) => write!(f, "Diffusion::Field(..)"),
        }
    }
}

/// Symmetric within `1e-12` and positive definite on the leading `dim` block.
pub(crate) fn check_spd(a: &Tensor, dim: usize) -> Result<(), String> {
    for i in 0..dim {
        for j in 0..i {
            let scale = a[i][j].abs().max(a[j][i].abs()).max(1.0);
            if (a[i][j] - a[j][i]).abs() > 1e-12 * scale {
                return Err(format!("diffusion tensor not symmetric ({i},{j})"));
            }
        }
    }
    let m1 = a[0][0];
    let m2 = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let ok = if dim == 2 {
        m1 > 0.0 && m2 > 0.0
    } else {
        let m3 = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
        m1 > 0.0 && m2 > 0.0 && m3 > 0.0
    };
    if ok && m1.is_finite() {
        Ok(())
    } else {
        Err("diffusion tensor not positive definite".to_string())
    }
}
