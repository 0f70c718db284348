//! Threshold classification, iteration bounds and numerical blow-up
//! experiments for the damped Klein-Gordon equation with a nonlocal power
//! source on expanding and contracting backgrounds.
//!
//! Modules:
//! - [`regimes`]: critical rates, dimension thresholds, lifespan bound shapes.
//! - [`specfun`]: modified Bessel functions and the profiles built from them.
//! - [`iteration`]: the slicing iteration for the lower bounds.
//! - [`ode`]: the averaged comparison ODE.
//! - [`pde`]: radial finite-difference solver for the full equation.
//! - [`sweep`]: epsilon sweeps and lifespan-law fits.

pub mod error;
pub mod fit;
pub mod iteration;
pub mod ode;
pub mod params;
pub mod pde;
pub mod quad;
pub mod regimes;
pub mod specfun;
pub mod sweep;

pub use error::{Error, Result};
pub use params::{ModelParams, Spacetime};
