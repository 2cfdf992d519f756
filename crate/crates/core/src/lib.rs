//! Hybridizable discontinuous Galerkin solvers for semilinear parabolic
//! problems, in a standard variant and an interpolatory variant that
//! replaces nonlinear quadrature by nodal interpolation.

pub mod analysis;
pub mod assembly;
pub mod checks;
pub mod error;
pub mod mesh;
pub mod nonlinear;
pub mod polybasis;
pub mod problems;
pub mod solver;
pub mod spaces;
pub mod sparse;
pub mod study;

#[cfg(test)]
mod properties;

pub use error::{HdgError, Result};
