//! A numerical laboratory for one-dimensional elliptic and parabolic equations
//! of mixed divergence/nondivergence structure with rapidly oscillating
//! periodic coefficients.
//!
//! The crate builds explicit periodic coefficient families, solves the
//! associated cell problems in closed form (invariant densities, flux
//! constants, effective averages, correctors), evaluates the rescaled
//! Dirichlet and Cauchy problems, and measures cylinder oscillations, Harnack
//! ratios and fitted Hölder exponents as the oscillation period shrinks.

pub mod error;
pub mod quad;
pub mod verify;

pub mod cell;
pub mod dirichlet;
pub mod periodic;

pub use error::{Error, Result};
pub use periodic::{make_bump, make_flat_top, BumpSpec, EtaPair, EtaVariant, PeriodicFn, SpaceTimeFn};
