//! Discrete one-phase Bernoulli energy on uniform 2D/3D lattices.

pub mod elliptic;
pub mod energy;
pub mod flatness;
pub mod error;
pub mod lattice;
pub mod regularity;
pub mod solver;
pub mod viscosity;

pub use error::{Error, Result};
pub use lattice::{make_grid, sample, Ball, Grid, GridFunction, Point, Role};
