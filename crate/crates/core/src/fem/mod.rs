//! Continuous piecewise-linear finite elements with homogeneous Dirichlet
//! boundary conditions.

mod assembly;
pub mod fields;
mod hierarchy;
pub mod quadrature;
mod space;

pub use assembly::{
    assemble_mass, assemble_mass_full, assemble_stiffness, assemble_stiffness_full, assemble_weighted_mass,
    local_mass, local_stiffness,
};
pub(crate) use assembly::FieldRule;
pub use fields::{Constant, Diffusion, ElementField, ElementPoint, FnField, Scaled, SumField, Tensor};
pub use hierarchy::multigrid_for;
pub use quadrature::Quadrature;
pub use space::{DiscreteFunction, FeSpace};
