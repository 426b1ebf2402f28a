//! Numerics for the semilinear heat equation with fading memory and a
//! non-local (Kirchhoff-type) diffusion coefficient.
//!
//! The memory term is rewritten with the integrated past history
//! `η^t(s) = ∫_{t-s}^t u(r) dr`, which turns the delay equation into an
//! autonomous system for `(u, η)`. Space is discretized with the Dirichlet
//! sine basis on an interval, the history variable lives on the nodes of a
//! product-integration rule for the weight `μ(s) ds`.
//!
//! Module map:
//!
//! - [`kernel`]: memory kernels, hypothesis checks, weighted quadrature.
//! - [`spectral`]: eigenbasis, transforms, the polynomial nonlinearity and
//!   the non-local diffusion coefficient.
//! - [`history`]: past trajectories, the lift into history space, memory
//!   forcing and transport of the history field.
//! - [`solver`]: the coupled Galerkin system, time stepping and the direct
//!   convolution reference integrator.
//! - [`diagnostics`]: energies, phase-space norms, decay envelope, absorbing
//!   ball, separation and attractor probes.
//!
//! The crate is `no_std` and only needs `alloc`.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod diagnostics;
pub mod error;
pub mod history;
pub mod integrate;
pub mod kernel;
pub mod linalg;
pub mod solver;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};
