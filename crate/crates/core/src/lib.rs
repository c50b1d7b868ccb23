//! Simulation and verification toolkit for the parabolic equation
//! `∂_t u = ½Δu + i ε^{-1} V(x/ε) u` with a large, highly oscillatory random
//! potential: Feynman-Kac Monte Carlo for `u_ε`, quadrature for the
//! homogenized solution and its effective constant, spectral correctors and
//! statistical checks of the fluctuation limits.

pub mod corrector;
pub mod error;
pub mod fastmath;
pub mod homogenization;
pub mod feynman_kac;
pub mod cli;
pub mod fluctuation;
pub mod quadrature;
pub mod random_field;
pub mod rng;

mod parallel;

pub use error::{Error, Result};
pub use feynman_kac::MCEstimate;
pub use num_complex::Complex64;
