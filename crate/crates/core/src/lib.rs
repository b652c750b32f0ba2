//! Simulation and verification toolkit for Gaussian multiplicative chaos
//! built on star-scale invariant log-correlated fields.
//!
//! The crate is organised bottom-up:
//!
//! * [`kernels`]: seed covariances, mollifiers, truncated kernels.
//! * [`spectral`]: Fourier-side decomposition of the convolution
//!   approximation into martingale, `W` and `Z` parts.
//! * [`fields`]: spectral synthesis of Gaussian fields on periodic grids.
//! * [`gmc`]: chaos measures in the sub-, critical and supercritical regimes.
//! * [`atomic`]: the limiting Poisson atomic measure and its closed forms.
//! * [`stats`]: Monte Carlo harness (Laplace functionals, multifractal fits,
//!   tail indices, Kahane's inequality, covariance comparisons).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atomic;
pub mod error;
pub mod fields;
pub mod gmc;
pub mod kernels;
pub mod quad;
pub mod radial;
pub mod rng;
pub mod snapshot;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
