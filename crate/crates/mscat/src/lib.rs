//! Robust M-estimation of scatter matrices in the regime where the dimension
//! and the sample count grow at the same rate.
//!
//! The crate is organized around six building blocks:
//!
//! - [`weights`] — admissible weight functions `u`, their `phi(s) = s*u(s)`
//!   and the inverse `phi_inverse`;
//! - [`estimator`] — the sample covariance matrix and the matrix fixed-point
//!   solver for the robust scatter estimate, plus the scalar interference
//!   iteration that characterizes the same solution;
//! - [`rmt`] — random-matrix diagnostics: the deterministic-equivalent solver
//!   `e_N(z)`, spectral gap and eigenvalue-spacing metrics, concentration and
//!   interlacing checks, and exact resolvent identities;
//! - [`doa`] — MUSIC, G-MUSIC and robust G-MUSIC direction-of-arrival
//!   estimation for a half-wavelength uniform linear array;
//! - [`datagen`] — seeded generators for sample matrices, population
//!   covariance models and array snapshots;
//! - [`harness`] — the Monte Carlo experiment runner, CSV/JSON reporting and
//!   the `mscat` command line interface.

pub mod datagen;
pub mod doa;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod rmt;
pub mod weights;

pub use estimator::{CovarianceEstimate, SampleSet};
pub use weights::WeightFunction;
