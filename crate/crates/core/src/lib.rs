//! Numerical laboratory for randomized initial data in the periodic
//! Navier-Stokes equations.
//!
//! The crate provides a pseudo-spectral toolbox on the torus `[0, L)^d`
//! (d = 2 or 3), a frequency-cube decomposition with a tunable narrowing
//! parameter, Gaussian randomization of divergence-free data keyed by a
//! counter-based generator, Besov/Sobolev norm evaluation, a Monte Carlo
//! harness for moment and tail statistics, and an incompressible
//! Navier-Stokes solver with integrating-factor and exponential
//! time-stepping schemes.

pub mod config;
pub mod decomp;
pub mod error;
pub mod fft;
pub mod field;
pub mod grid;
pub mod mc;
pub mod norms;
pub mod nsrf;
pub mod ops;
pub mod profile;
pub mod random;
pub mod report;
pub mod solver;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
