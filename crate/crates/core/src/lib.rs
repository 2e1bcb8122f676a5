//! Equilibrium configurations of rotating, non-isentropic, self-gravitating
//! gas by constrained minimization of the total energy over ellipsoidally
//! symmetric densities of fixed mass.
//!
//! The library is organized around the solve pipeline:
//!
//! * [`model`] declares the structure functions (pressure law, entropy per
//!   mass, angular momentum per mass) and samples the admissibility
//!   conditions they must satisfy;
//! * [`geometry`] provides the radial grid and shell quadrature of the
//!   ellipsoidal symmetry;
//! * [`fields`] derives the cumulative masses and rotation terms of a
//!   density profile;
//! * [`gravity`] evaluates the Newtonian potential with a ring-kernel
//!   panel method and reduces it to a symmetric per-grid operator;
//! * [`energy`] assembles the energy functional, its reduced potential
//!   function and the verification operators;
//! * [`solver`] runs the self-consistent-field iteration under the mass
//!   constraint and scans the shape family;
//! * [`oracles`] holds the independent cross-checks (Lane-Emden, Monte
//!   Carlo, adaptive quadrature).

// Validations are written as `!(x > 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod gravity;
pub mod model;
pub mod oracles;
pub mod solver;

pub use error::{Error, Result};
