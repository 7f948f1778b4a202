//! Thin-layer reduced models for gravity-driven free-surface flows.
//!
//! The crate integrates depth-averaged (inertial) and lubrication-type (viscous)
//! reduced models for Newtonian, power-law and viscoelastic (UCM / FENE-P)
//! fluids on a uniform Cartesian grid, rebuilds approximate 3D fields from a
//! reduced solution, and measures how well those fields satisfy the full
//! free-surface Navier-Stokes boundary value problem as the aspect ratio
//! shrinks.
//!
//! Module map:
//! - [`geometry`]: grids, topography, slope forcing, central-difference operators
//! - [`state`]: flow and conformation containers, parameters, validation
//! - [`closures`]: pointwise constitutive kernels and discharge laws
//! - [`models`]: semi-discrete right-hand sides of every reduced model
//! - [`timestepper`]: exponential second-order stepping with exact stiff decay
//! - [`reconstruct`]: 3D extrusion of velocity, pressure and stress
//! - [`audit`]: full-problem residuals and epsilon sweeps
//! - [`cli`]: configuration parsing and the command-line driver

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod audit;
pub mod cli;
pub mod closures;
mod error;
mod fv;
pub mod geometry;
pub mod io;
pub mod models;
pub mod quadrature;
pub mod reconstruct;
pub mod state;
pub mod timestepper;

pub use error::{Error, Result};
