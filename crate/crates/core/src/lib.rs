//! Robust topology optimization of 2D continuum structures under stochastic
//! loads, driven by an entropic accelerated mirror-descent stochastic
//! approximation loop.
//!
//! The crate is organized along the data flow of one optimization step:
//!
//! - [`fem`]: structured quad meshes, sparse assembly, direct/CG solves,
//!   compliance.
//! - [`density`]: density filtering, SIMP interpolation, the scaled design
//!   variables living on a simplex, symmetry, and filter-radius
//!   continuation.
//! - [`loads`]: random load models and their closed-form means.
//! - [`estimator`]: unbiased small-sample estimators of the mean/variance
//!   compliance objective and its gradient.
//! - [`prox`]: the entropic (multiplicative) proximal update with move
//!   limits and a bisection on the volume multiplier.
//! - [`optimizer`]: the accelerated stochastic approximation loop with
//!   step-size calibration, adaptive recalibration, damping, and run
//!   records.
//! - [`problems`]: the benchmark problem registry.
//! - [`artifacts`]: density/history/summary file emission.

pub mod artifacts;
pub mod config;
pub mod density;
pub mod error;
pub mod estimator;
pub mod fem;
pub mod loads;
pub mod optimizer;
pub mod problems;
pub mod prox;
pub mod rng;

pub use error::{Error, Result};
