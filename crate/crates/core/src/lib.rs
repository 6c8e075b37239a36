//! Simulation and verification kernel for weakly damped Kirchhoff flows.
//!
//! The hyperbolic problem
//!
//! ```text
//! eps u'' + (1+t)^-p u' + m(|A^1/2 u|^2) A u = 0
//! ```
//!
//! and its parabolic limit `(1+t)^-p u' + m(|A^1/2 u|^2) A u = 0` are solved on
//! a finite diagonal spectrum of `A`. On top of the trajectories sit the energy
//! functionals, the comparison envelopes and the checks in [`analysis`].

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod energies;
pub mod error;
pub mod evolution;
pub mod integrator;
pub mod quadrature;
pub mod scalar;
pub mod series;
pub mod spectral;

pub use error::{Error, IntegrationError, Result};
pub use spectral::{MassFunction, SpectralOperator, SpectralVector};
