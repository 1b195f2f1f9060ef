//! Numerical verification of two-scale expansions for periodic linear
//! elasticity with mixed boundary conditions.

pub mod cell;
pub mod error;
pub mod fem;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod oracles;
pub mod tensors;
pub mod twoscale;

pub use error::{Error, Result};
