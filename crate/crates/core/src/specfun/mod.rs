//! Special functions: modified Bessel functions of real order and the
//! profiles built from them.

pub mod bessel;
pub mod profiles;

pub use bessel::{
    bessel_i, bessel_i_deriv, bessel_k, bessel_k_deriv, log_bessel_i, log_bessel_k, scaled_pair,
    wronskian_residual, ScaledPair,
};
pub use profiles::{log_phi, phi, psi_dual_norm, psi_dual_norm_bound, Envelope, TimeProfile};
