//! Linearization-based feedback stabilization of McKean-Vlasov dynamics on the
//! circle `T = [0, 2π)`.
//!
//! The crate is `no_std` (it needs `alloc`) and contains the whole numerical
//! pipeline:
//!
//! - [`spectral`]: truncated Fourier fields and their exact algebra,
//! - [`model`]: benchmark potentials, Bessel functions, free energy,
//! - [`stationary`]: self-consistent stationary densities,
//! - [`operators`]: Galerkin matrices, spectra, Hautus test, ground-state checks,
//! - [`riccati`]: algebraic Riccati and Lyapunov solvers, feedback laws,
//! - [`simulation`]: the nonlinear closed loop integrated by Dormand-Prince 5(4).
//!
//! IO, configuration and the command-line front end live in the `mvstab` crate.
#![no_std]
#![warn(missing_debug_implementations)]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
mod fft;
mod math;

pub mod bessel;
pub mod integrator;
pub mod linalg;
pub mod model;
pub mod operators;
pub mod riccati;
pub mod simulation;
pub mod spectral;
pub mod stationary;

pub use error::{Error, Result};
pub use model::{ModelKind, ModelParams, ModelSpec};
pub use operators::{Basis, HautusReport, LinearizedSystem, SpectrumReport};
pub use riccati::FeedbackLaw;
pub use simulation::{SimulationSetup, TrajectoryRecord};
pub use spectral::{GridFunction, SpectralField};
pub use stationary::{Branch, StationaryState};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
