//! Reflected stochastic differential equations in nonsmooth domains.
//!
//! The crate provides domain geometry with projections and normal cones,
//! driving paths and their norms, the Skorohod map, reflected Euler and
//! Wong–Zakai integrators, skeletons, and a Monte Carlo harness.

pub mod config;
pub mod error;
pub mod geometry;
pub mod maxprinciple;
pub mod montecarlo;
pub mod paths;
pub mod rng;
pub mod rsde;
pub mod skorohod;
pub(crate) mod vecops;

pub use error::{Error, ErrorClass, Result};
