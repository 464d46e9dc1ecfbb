//! Parallel orbital-updating eigensolver for elliptic and Kohn-Sham
//! eigenvalue problems on adaptively refined simplicial meshes.
//!
//! Each outer iteration refines the mesh (estimate, mark, bisect), solves
//! one independent linear source problem per orbital, and projects onto the
//! span of the results through a small dense generalized eigenproblem.

pub mod adapt;
pub mod config;
pub mod error;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod model;
pub mod paro;
pub mod verify;

pub use error::{Error, Result};

/// Coordinates in atomic units. Two-dimensional meshes leave the last entry at zero.
pub type Point = [f64; 3];
