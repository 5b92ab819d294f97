//! Numerical laboratory for Dirichlet homogenization on perforated domains.
//!
//! Given a target potential `mu`, [`inverse`] builds a lattice of
//! capacity-matched balls; [`solver`] solves the perforated problem
//! `-Delta u_eps = f` and the limit problem `(-Delta + mu) u = f`;
//! [`diagnostics`] evaluates the separation and capacity-density quantities;
//! [`harness`] ties these into eps-sweeps with CSV/JSON reports.

// `!(x > 0.0)` style guards reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capacity;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod holes;
pub mod inverse;
pub mod potential;
pub mod quadrature;
pub mod solver;
pub mod tiling;

pub use capacity::{capacity_ball, capacity_extrapolate, capacity_variational, potential_ball, sphere_area, CapacityResult};
pub use error::{Error, Result};
pub use holes::{Hole, SeparationParams};
pub use inverse::{construct_holes, ConstructionReport};
pub use potential::{Potential, QuadratureSpec};
pub use solver::{Grid, GridField, LumpedMeasure, SolveStats};
pub use tiling::{AxisBox, Cell, TilingSpec};
