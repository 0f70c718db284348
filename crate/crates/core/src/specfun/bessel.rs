//! Modified Bessel functions `I_ν` and `K_ν` of real order `ν ≥ 0`.
//!
//! Argument ranges:
//! - `z < 2`: power series for `I`, Temme's series for `K` at the reduced
//!   order `|μ| ≤ 1/2` followed by upward recurrence.
//! - `2 ≤ z < 20`: Steed's continued fraction for `K`, then `I` from the
//!   ratio `I_{ν+1}/I_ν` and the Wronskian.
//! - `z ≥ 20`: Hankel asymptotic expansion for both; falls back to the
//!   continued-fraction path if the expansion does not reach full precision.
//!
//! Everything is computed in scaled form (`I e^{-z}`, `K e^{z}`) so the log
//! variants stay finite far beyond the overflow point of the plain values.

use std::f64::consts::PI;

use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const MAX_ITER: usize = 200_000;
pub const SERIES_LIMIT: f64 = 2.0;
pub const ASYMPTOTIC_LIMIT: f64 = 20.0;

/// Scaled values at orders `ν` and `ν + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledPair {
    pub order: f64,
    pub arg: f64,
    /// `I_ν(z) e^{-z}`
    pub i: f64,
    /// `I_{ν+1}(z) e^{-z}`
    pub i_next: f64,
    /// `K_ν(z) e^{z}`
    pub k: f64,
    /// `K_{ν+1}(z) e^{z}`
    pub k_next: f64,
}

fn check(order: f64, arg: f64) -> Result<()> {
    if !(order >= 0.0) || !order.is_finite() {
        return Err(Error::Domain(format!(
            "Bessel order must be finite and >= 0, got {order}"
        )));
    }
    if !(arg > 0.0) || !arg.is_finite() {
        return Err(Error::Domain(format!(
            "Bessel argument must be finite and > 0, got {arg}"
        )));
    }
    Ok(())
}

/// Scaled `I` and `K` at orders `ν` and `ν + 1`.
pub fn scaled_pair(order: f64, arg: f64) -> Result<ScaledPair> {
    check(order, arg)?;
    let (i, i_next, k, k_next) = if arg < SERIES_LIMIT {
        let (k, k_next) = k_temme(order, arg)?;
        let i = i_series(order, arg)?;
        let i_next = i_series(order + 1.0, arg)?;
        let scale = (-arg).exp();
        (i * scale, i_next * scale, k * arg.exp(), k_next * arg.exp())
    } else if arg >= ASYMPTOTIC_LIMIT {
        match (hankel(order, arg), hankel(order + 1.0, arg)) {
            (Some((i, k)), Some((i_next, k_next))) => (i, i_next, k, k_next),
            _ => continued_fraction_path(order, arg)?,
        }
    } else {
        continued_fraction_path(order, arg)?
    };
    Ok(ScaledPair {
        order,
        arg,
        i,
        i_next,
        k,
        k_next,
    })
}

pub fn bessel_i(order: f64, arg: f64) -> Result<f64> {
    Ok(scaled_pair(order, arg)?.i * arg.exp())
}

pub fn bessel_k(order: f64, arg: f64) -> Result<f64> {
    Ok(scaled_pair(order, arg)?.k * (-arg).exp())
}

pub fn log_bessel_i(order: f64, arg: f64) -> Result<f64> {
    Ok(scaled_pair(order, arg)?.i.ln() + arg)
}

pub fn log_bessel_k(order: f64, arg: f64) -> Result<f64> {
    Ok(scaled_pair(order, arg)?.k.ln() - arg)
}

/// `K_ν'(z) = -K_{ν+1}(z) + (ν/z) K_ν(z)`.
pub fn bessel_k_deriv(order: f64, arg: f64) -> Result<f64> {
    let p = scaled_pair(order, arg)?;
    Ok((-p.k_next + order / arg * p.k) * (-arg).exp())
}

/// `I_ν'(z) = I_{ν+1}(z) + (ν/z) I_ν(z)`.
pub fn bessel_i_deriv(order: f64, arg: f64) -> Result<f64> {
    let p = scaled_pair(order, arg)?;
    Ok((p.i_next + order / arg * p.i) * arg.exp())
}

/// `I_ν K_ν' - I_ν' K_ν + 1/z`, scaled so that the exponentials cancel.
pub fn wronskian_residual(order: f64, arg: f64) -> Result<f64> {
    let p = scaled_pair(order, arg)?;
    let kd = -p.k_next + order / arg * p.k;
    let id = p.i_next + order / arg * p.i;
    Ok(p.i * kd - id * p.k + 1.0 / arg)
}

fn i_series(order: f64, arg: f64) -> Result<f64> {
    let half = 0.5 * arg;
    let quarter_sq = half * half;
    let lead = if order == 0.0 {
        1.0
    } else {
        (order * half.ln() - ln_gamma(order + 1.0)).exp()
    };
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..MAX_ITER {
        let kf = k as f64;
        term *= quarter_sq / (kf * (kf + order));
        sum += term;
        if term < EPS * sum {
            return Ok(lead * sum);
        }
    }
    Err(Error::NonConvergence("I power series".into()))
}

// Coefficients of 1/Γ(z) = Σ_{k≥1} c_k z^k.
const RECIP_GAMMA: [f64; 26] = [
    1.0,
    0.577_215_664_901_532_9,
    -0.655_878_071_520_253_8,
    -0.042_002_635_034_095_2,
    0.166_538_611_382_291_5,
    -0.042_197_734_555_544_3,
    -0.009_621_971_527_877_0,
    0.007_218_943_246_663_0,
    -0.001_165_167_591_859_1,
    -0.000_215_241_674_114_9,
    0.000_128_050_282_388_2,
    -0.000_020_134_854_780_7,
    -0.000_001_250_493_482_1,
    0.000_001_133_027_232_0,
    -0.000_000_205_633_841_7,
    0.000_000_006_116_095_0,
    0.000_000_005_002_007_5,
    -0.000_000_001_181_274_6,
    0.000_000_000_104_342_7,
    0.000_000_000_007_782_3,
    -0.000_000_000_003_696_8,
    0.000_000_000_000_510_0,
    -0.000_000_000_000_020_6,
    -0.000_000_000_000_005_4,
    0.000_000_000_000_001_4,
    0.000_000_000_000_000_1,
];

/// `(1/Γ(1-μ) - 1/Γ(1+μ)) / (2μ)` and `(1/Γ(1-μ) + 1/Γ(1+μ)) / 2` for `|μ| ≤ 1/2`.
pub(crate) fn temme_gammas(mu: f64) -> (f64, f64) {
    let x2 = mu * mu;
    // even-index coefficients (c_2, c_4, ...) give the odd part of 1/Γ(1+x)
    let mut odd = 0.0;
    let mut even = 0.0;
    let mut pw = 1.0;
    for pair in RECIP_GAMMA.chunks(2) {
        even += pair[0] * pw;
        if pair.len() > 1 {
            odd += pair[1] * pw;
        }
        pw *= x2;
    }
    (-odd, even)
}

fn k_temme(order: f64, arg: f64) -> Result<(f64, f64)> {
    let nl = (order + 0.5).floor();
    let mu = order - nl;
    let mu2 = mu * mu;
    let x2 = 0.5 * arg;
    let pimu = PI * mu;
    let fact = if pimu.abs() < EPS {
        1.0
    } else {
        pimu / pimu.sin()
    };
    let d = -x2.ln();
    let e = mu * d;
    let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
    let (gam1, gam2) = temme_gammas(mu);
    let gampl = 1.0 / gamma(1.0 + mu);
    let gammi = 1.0 / gamma(1.0 - mu);
    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let ee = e.exp();
    let mut p = 0.5 * ee / gampl;
    let mut q = 0.5 / (ee * gammi);
    let mut c = 1.0;
    let dd = x2 * x2;
    let mut sum1 = p;
    let mut converged = false;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu2);
        c *= dd / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        let del1 = c * (p - fi * ff);
        sum1 += del1;
        if del.abs() < sum.abs() * EPS {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence("K Temme series".into()));
    }
    let kmu = sum;
    let k1 = sum1 * 2.0 / arg;
    Ok(recur_up(mu, nl as usize, arg, kmu, k1))
}

fn recur_up(mu: f64, steps: usize, arg: f64, mut k: f64, mut k1: f64) -> (f64, f64) {
    let xi2 = 2.0 / arg;
    for i in 1..=steps {
        let next = (mu + i as f64) * xi2 * k1 + k;
        k = k1;
        k1 = next;
    }
    (k, k1)
}

/// Scaled `K_μ e^{z}`, `K_{μ+1} e^{z}` from Steed's continued fraction, `|μ| ≤ 1/2`.
fn k_steed_scaled(mu: f64, arg: f64) -> Result<(f64, f64)> {
    let mu2 = mu * mu;
    let mut b = 2.0 * (1.0 + arg);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - mu2;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    let mut converged = false;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * fi;
        c = -a * c / (fi + 1.0);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence("K continued fraction".into()));
    }
    h *= a1;
    let kmu = (PI / (2.0 * arg)).sqrt() / s;
    let k1 = kmu * (mu + arg + 0.5 - h) / arg;
    Ok((kmu, k1))
}

/// `I_{ν+1}/I_ν` by modified Lentz.
fn i_ratio(order: f64, arg: f64) -> Result<f64> {
    let mut f = TINY;
    let mut c = f;
    let mut d = 0.0;
    for k in 1..MAX_ITER {
        let b = 2.0 * (order + k as f64) / arg;
        d += b;
        if d.abs() < TINY {
            d = TINY;
        }
        d = 1.0 / d;
        c = b + 1.0 / c;
        if c.abs() < TINY {
            c = TINY;
        }
        let del = c * d;
        f *= del;
        if (del - 1.0).abs() < EPS {
            return Ok(f);
        }
    }
    Err(Error::NonConvergence("I ratio continued fraction".into()))
}

fn continued_fraction_path(order: f64, arg: f64) -> Result<(f64, f64, f64, f64)> {
    let nl = (order + 0.5).floor();
    let mu = order - nl;
    let (kmu, k1) = k_steed_scaled(mu, arg)?;
    let (k, k_next) = recur_up(mu, nl as usize, arg, kmu, k1);
    let ratio = i_ratio(order, arg)?;
    // Wronskian I_ν K_{ν+1} + I_{ν+1} K_ν = 1/z (scalings cancel)
    let i = 1.0 / (arg * (k_next + ratio * k));
    Ok((i, ratio * i, k, k_next))
}

/// Hankel expansion; `None` when the terms stop decreasing before full precision.
fn hankel(order: f64, arg: f64) -> Option<(f64, f64)> {
    let mu = 4.0 * order * order;
    let mut term = 1.0;
    let mut sum_k = 1.0;
    let mut sum_i = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= (mu - odd * odd) / (kf * 8.0 * arg);
        let mag = term.abs();
        if mag > prev && mag > EPS {
            return None;
        }
        sum_k += term;
        sum_i += if k % 2 == 1 { -term } else { term };
        if mag < EPS * 0.1 {
            let k_scaled = (PI / (2.0 * arg)).sqrt() * sum_k;
            let i_scaled = sum_i / (2.0 * PI * arg).sqrt();
            return Some((i_scaled, k_scaled));
        }
        prev = mag;
    }
    None
}
