//! Profiles built from the Bessel functions: the eigenfunction `Φ` with
//! `ΔΦ = Φ`, the time profile `λ(t) = e^{bt/2} K_ν((c/H) e^{Ht})`, its
//! envelopes, and the dual-norm bound of `Ψ = λ Φ` on the light cone.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::bessel::{log_bessel_i, scaled_pair};
use crate::error::{Error, Result};
use crate::params::{sphere_area, ModelParams};

/// `ln Φ(ρ)` where `Φ(x) = ∫_{S^{n-1}} e^{x·ω} dσ_ω` and `ρ = |x|`.
pub fn log_phi(dim: u32, rho: f64) -> Result<f64> {
    if dim == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::Domain(format!(
            "radius must be finite and >= 0, got {rho}"
        )));
    }
    if dim == 1 {
        return Ok(rho + (-2.0 * rho).exp().ln_1p());
    }
    if rho == 0.0 {
        return Ok(sphere_area(dim).ln());
    }
    let half = dim as f64 / 2.0;
    Ok(half * (2.0 * PI).ln() + (1.0 - half) * rho.ln() + log_bessel_i(half - 1.0, rho)?)
}

pub fn phi(dim: u32, rho: f64) -> Result<f64> {
    Ok(log_phi(dim, rho)?.exp())
}

/// Order `ν = √(b²-4m²)/(2H)` and the constants that define `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeProfile {
    pub order: f64,
    pub damping: f64,
    pub mass_sq: f64,
    pub speed: f64,
    pub hubble: f64,
}

impl TimeProfile {
    pub fn new(params: &ModelParams) -> Result<Self> {
        let disc = params.discriminant();
        if disc < -crate::regimes::BALANCE_TOL {
            return Err(Error::Unsupported(
                "time profile needs b² >= 4m² (real Bessel order)".into(),
            ));
        }
        Ok(TimeProfile {
            order: disc.max(0.0).sqrt() / (2.0 * params.hubble),
            damping: params.damping,
            mass_sq: params.mass_sq,
            speed: params.speed,
            hubble: params.hubble,
        })
    }

    fn arg(&self, t: f64) -> f64 {
        self.speed / self.hubble * (self.hubble * t).exp()
    }

    /// `ln λ(t)`.
    pub fn log_value(&self, t: f64) -> Result<f64> {
        let z = self.arg(t);
        let p = scaled_pair(self.order, z)?;
        Ok(0.5 * self.damping * t + p.k.ln() - z)
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        Ok(self.log_value(t)?.exp())
    }

    /// `λ'(t) / λ(t) = b/2 + νH - c e^{Ht} K_{ν+1}/K_ν`.
    pub fn log_derivative(&self, t: f64) -> Result<f64> {
        let z = self.arg(t);
        let p = scaled_pair(self.order, z)?;
        Ok(0.5 * self.damping + self.order * self.hubble - self.hubble * z * p.k_next / p.k)
    }

    pub fn derivative(&self, t: f64) -> Result<f64> {
        Ok(self.log_derivative(t)? * self.value(t)?)
    }

    /// `ln` of the reference envelope `e^{(b-H)t/2} exp(-(c/H) e^{Ht})`.
    pub fn log_envelope_shape(&self, t: f64) -> f64 {
        0.5 * (self.damping - self.hubble) * t - self.arg(t)
    }

    /// Limit of `λ / shape` as `t → ∞`.
    pub fn envelope_ratio_limit(&self) -> f64 {
        (PI * self.hubble / (2.0 * self.speed)).sqrt()
    }

    /// Relative residual of `f'' - b f' + (m² - c² e^{2Ht}) f = 0` at `t`
    /// for the function whose log is `log_f`. Derivatives come from 8th-order
    /// central differences of `f(t+s)/f(t)`.
    pub fn ode_residual_with<F: Fn(f64) -> Result<f64>>(&self, log_f: F, t: f64) -> Result<f64> {
        const H: f64 = 2e-3;
        const D1: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
        const D2: [f64; 4] = [8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];
        const D2_CENTER: f64 = -205.0 / 72.0;
        let base = log_f(t)?;
        let mut d1 = 0.0;
        let mut d2 = D2_CENTER;
        for k in 1..=4 {
            let s = k as f64 * H;
            let fp = (log_f(t + s)? - base).exp();
            let fm = (log_f(t - s)? - base).exp();
            d1 += D1[k - 1] * (fp - fm);
            d2 += D2[k - 1] * (fp + fm);
        }
        d1 /= H;
        d2 /= H * H;
        let potential = self.mass_sq - (self.speed * (self.hubble * t).exp()).powi(2);
        let residual = d2 - self.damping * d1 + potential;
        let scale = d2.abs() + self.damping * d1.abs() + potential.abs();
        Ok(residual.abs() / scale.max(f64::MIN_POSITIVE))
    }

    pub fn ode_residual(&self, t: f64) -> Result<f64> {
        self.ode_residual_with(|s| self.log_value(s), t)
    }
}

/// Constants `λ₀ ≤ λ(t) / shape(t) ≤ Λ₀` for all `t ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub lower: f64,
    pub upper: f64,
}

impl Envelope {
    /// Calibrated on 512 points of `[0, 6]` together with the `t → ∞` limit;
    /// `√z e^z K_ν(z)` is monotone in `z`, so the extremes sit at the ends.
    pub fn calibrate(profile: &TimeProfile) -> Result<Self> {
        let mut lo = profile.envelope_ratio_limit();
        let mut hi = lo;
        for i in 0..512 {
            let t = 6.0 * i as f64 / 511.0;
            let r = (profile.log_value(t)? - profile.log_envelope_shape(t)).exp();
            lo = lo.min(r);
            hi = hi.max(r);
        }
        Ok(Envelope {
            lower: lo,
            upper: hi,
        })
    }

    pub fn lower_at(&self, profile: &TimeProfile, t: f64) -> f64 {
        self.lower * profile.log_envelope_shape(t).exp()
    }

    pub fn upper_at(&self, profile: &TimeProfile, t: f64) -> f64 {
        self.upper * profile.log_envelope_shape(t).exp()
    }
}

/// Closed-form bound for `‖Ψ(t,·)‖_{L^{p'}(B_{R+A(t)})}` up to a constant:
/// `e^{(b-H)t/2} (R + (c/H)(e^{Ht}-1))^{(n-1)(1/2-1/p)}`.
pub fn psi_dual_norm_bound(params: &ModelParams, t: f64) -> f64 {
    let reach = params.radius + params.speed / params.hubble * (params.hubble * t).exp_m1();
    let n = params.dim as f64;
    (0.5 * (params.damping - params.hubble) * t).exp()
        * reach.powf((n - 1.0) * (0.5 - 1.0 / params.power))
}

/// `‖λ(t) Φ‖_{L^{p'}(B_{R+A(t)})}` by quadrature in the log domain.
pub fn psi_dual_norm(params: &ModelParams, t: f64) -> Result<f64> {
    let profile = TimeProfile::new(params)?;
    let dual = params.power / (params.power - 1.0);
    let reach = params.radius + params.speed / params.hubble * (params.hubble * t).exp_m1();
    let peak = dual * log_phi(params.dim, reach)?;
    let n = params.dim as f64;
    let intervals = 4000;
    let h = reach / intervals as f64;
    let weights = crate::quad::simpson_weights(intervals + 1, h);
    let mut integral = 0.0;
    for (i, w) in weights.iter().enumerate() {
        let r = i as f64 * h;
        integral += w * (dual * log_phi(params.dim, r)? - peak).exp() * r.powf(n - 1.0);
    }
    let log_norm = (sphere_area(params.dim) * integral).ln() / dual + peak / dual;
    Ok((profile.log_value(t)? + log_norm).exp())
}
