//! Simulation and wavelet-based identification of multiscale fractional
//! Brownian motion.
//!
//! The pipeline runs from a [`model::ModelSpec`] through exact Gaussian
//! synthesis ([`simulate`]), the log-variance spectrum of a band-limited
//! wavelet ([`wavelet`]), piecewise-affine segmentation of that spectrum
//! ([`changepoint`]) and per-segment estimation with a χ² goodness-of-fit
//! test ([`inference`]).

pub mod changepoint;
mod chirp;
pub mod cli;
pub mod config;
pub mod error;
pub mod inference;
pub mod io;
pub mod model;
pub mod montecarlo;
pub mod quad;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod wavelet;

pub use error::{Error, Result};
