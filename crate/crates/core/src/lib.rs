//! Numerical laboratory for vortex-type equations on flat lattice tori.

pub mod bundle_fields;
pub mod cli;
pub mod error;
pub mod functionals;
pub mod geometry;
pub mod linalg;
pub mod operators;
pub mod stability;
pub mod solvers;
pub mod swkahler;
pub mod transforms;

pub use error::{Result, VortexError};
pub use geometry::{LatticeTorus, C64};
