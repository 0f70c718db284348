//! Lifespan-law regressions on measured blow-up times.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::quad::{fit_line, LineFit};
use crate::regimes::{lifespan_bound, log_implicit_profile, BoundFamily, LifespanBound};

/// Scaling law regressed against `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Law {
    /// `ln T̂` against `ln ε`.
    PowerLaw,
    /// `ln T̂` against `ε^{-s}`; the exponent `s` is fitted too.
    ExpLaw,
    /// `ln θ(T̂)` against `ln ε` with `θ(τ) = e^τ τ^{aux}`.
    ThetaLaw,
}

impl Law {
    pub const ALL: [Law; 3] = [Law::PowerLaw, Law::ExpLaw, Law::ThetaLaw];

    pub fn name(self) -> &'static str {
        match self {
            Law::PowerLaw => "power_law",
            Law::ExpLaw => "exp_law",
            Law::ThetaLaw => "theta_law",
        }
    }

    /// The law whose regression matches a bound family.
    pub fn for_family(family: BoundFamily) -> Law {
        match family {
            BoundFamily::PowerLaw => Law::PowerLaw,
            BoundFamily::ExpLaw => Law::ExpLaw,
            _ => Law::ThetaLaw,
        }
    }
}

impl fmt::Display for Law {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Law {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "powerlaw" | "power" => Ok(Law::PowerLaw),
            "explaw" | "exp" => Ok(Law::ExpLaw),
            "thetalaw" | "theta" => Ok(Law::ThetaLaw),
            _ => Err(Error::param("law", format!("unknown law `{s}`"))),
        }
    }
}

/// One measured lifespan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifespanPoint {
    pub epsilon: f64,
    pub t_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Number of largest-`ε` points left out of the regression.
    pub discard_largest: usize,
    /// `τ` exponent of the implicit profile for [`Law::ThetaLaw`].
    pub aux_exponent: f64,
    /// Search interval for the exp-law exponent `s`.
    pub exp_search: (f64, f64),
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            discard_largest: 2,
            aux_exponent: 0.0,
            exp_search: (0.05, 5.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub law: Law,
    /// Fitted `ε` exponent: the log-log slope, or `-s` for the exp law.
    pub fitted_exponent: f64,
    /// Slope against `ε^{-s}` for the exp law.
    pub fitted_k: Option<f64>,
    pub intercept: f64,
    pub r_squared: f64,
    /// Exp law only: `r²` of the regression at the theory exponent.
    pub r_squared_at_theory: Option<f64>,
    pub points_used: usize,
    pub theory_exponent: Option<f64>,
    pub tolerance: Option<f64>,
    pub verdict: Option<bool>,
}

/// `(ε, ln T̂)` ordered by decreasing `ε`, with the largest `discard` dropped.
fn usable(points: &[(f64, f64)], discard: usize) -> Result<Vec<(f64, f64)>> {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(e, lt)| *e > 0.0 && lt.is_finite())
        .collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let kept: Vec<(f64, f64)> = pts.into_iter().skip(discard).collect();
    if kept.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "need at least 4 blow-up points after discarding {discard}, got {}",
            kept.len()
        )));
    }
    Ok(kept)
}

fn log_pairs(points: &[LifespanPoint]) -> Vec<(f64, f64)> {
    points
        .iter()
        .filter(|p| p.t_hat > 0.0)
        .map(|p| (p.epsilon, p.t_hat.ln()))
        .collect()
}

fn regress(x: &[f64], y: &[f64]) -> Result<LineFit> {
    fit_line(x, y).ok_or_else(|| Error::InsufficientData("degenerate abscissa".into()))
}

/// Line of `ln T̂` against `ε^{-s}`.
fn exp_law_line(pts: &[(f64, f64)], s: f64) -> Result<LineFit> {
    let x: Vec<f64> = pts.iter().map(|p| (-s * p.0.ln()).exp()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    regress(&x, &y)
}

/// Exponent `s` maximizing the linearity of `ln T̂` in `ε^{-s}`.
fn best_exp_exponent(pts: &[(f64, f64)], lo: f64, hi: f64) -> f64 {
    let score = |s: f64| exp_law_line(pts, s).map(|f| f.r_squared).unwrap_or(0.0);
    // coarse scan, then golden-section refinement around the best cell
    let cells = 60;
    let step = (hi - lo) / cells as f64;
    let mut best = lo;
    let mut best_score = f64::NEG_INFINITY;
    for k in 0..=cells {
        let s = lo + k as f64 * step;
        let v = score(s);
        if v > best_score {
            best_score = v;
            best = s;
        }
    }
    let (mut a, mut b) = ((best - step).max(lo), (best + step).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (score(c), score(d));
    for _ in 0..100 {
        if (b - a).abs() < 1e-10 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = score(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = score(d);
        }
    }
    0.5 * (a + b)
}

/// Regress `points` against `law`; theory fields are left empty.
pub fn fit_lifespan(points: &[LifespanPoint], law: Law, options: &FitOptions) -> Result<FitResult> {
    fit_log_lifespan(&log_pairs(points), law, options)
}

/// As [`fit_lifespan`] on `(ε, ln T)` pairs, for lifespans too long for `f64`.
pub fn fit_log_lifespan(
    points: &[(f64, f64)],
    law: Law,
    options: &FitOptions,
) -> Result<FitResult> {
    let pts = usable(points, options.discard_largest)?;
    let ln_eps: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let base = FitResult {
        law,
        fitted_exponent: f64::NAN,
        fitted_k: None,
        intercept: f64::NAN,
        r_squared: f64::NAN,
        r_squared_at_theory: None,
        points_used: pts.len(),
        theory_exponent: None,
        tolerance: None,
        verdict: None,
    };
    let line = match law {
        Law::PowerLaw => {
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            regress(&ln_eps, &y)?
        }
        Law::ThetaLaw => {
            let aux = options.aux_exponent;
            // ln θ(T̂) = T̂ + aux ln T̂
            let y: Vec<f64> = pts
                .iter()
                .map(|p| log_implicit_profile(aux, p.1.exp()))
                .collect();
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(
                    "implicit profile undefined at a measured lifespan".into(),
                ));
            }
            regress(&ln_eps, &y)?
        }
        Law::ExpLaw => {
            let (lo, hi) = options.exp_search;
            let s = best_exp_exponent(&pts, lo, hi);
            let line = exp_law_line(&pts, s)?;
            return Ok(FitResult {
                fitted_exponent: -s,
                fitted_k: Some(line.slope),
                intercept: line.intercept,
                r_squared: line.r_squared,
                ..base
            });
        }
    };
    Ok(FitResult {
        fitted_exponent: line.slope,
        intercept: line.intercept,
        r_squared: line.r_squared,
        ..base
    })
}

/// Tolerances used for verdicts, relative to the theory exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub power: f64,
    pub exp: f64,
    pub min_r_squared: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            power: 0.15,
            exp: 0.25,
            min_r_squared: 0.98,
        }
    }
}

/// Theory-versus-fit record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub law: Law,
    pub family: BoundFamily,
    pub theory_exponent: f64,
    pub fitted_exponent: f64,
    pub fitted_k: Option<f64>,
    /// Absolute tolerance on the exponent.
    pub tolerance: f64,
    pub r_squared: f64,
    pub r_squared_at_theory: Option<f64>,
    pub min_r_squared: f64,
    pub points_used: usize,
    pub pass: bool,
}

impl Verdict {
    pub fn line(&self) -> String {
        let k = self
            .fitted_k
            .map(|k| format!(", K {k:.4}"))
            .unwrap_or_default();
        format!(
            "{}: theory {:.3}, fitted {:.3}±{:.3}{k}, r² {:.4}, {}",
            self.law,
            self.theory_exponent,
            self.fitted_exponent,
            self.tolerance,
            self.r_squared,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// Attach the predicted exponent and decide pass/fail.
pub fn compare_to_theory(
    fit: &FitResult,
    bound: &LifespanBound,
    tol: &Tolerances,
) -> Result<(FitResult, Verdict)> {
    let expected = Law::for_family(bound.family);
    if fit.law != expected {
        return Err(Error::RegimeMismatch(format!(
            "{} fit cannot be compared with a {:?} bound (expects {expected})",
            fit.law, bound.family
        )));
    }
    let theory = bound.epsilon_exponent;
    let rel = if fit.law == Law::ExpLaw {
        tol.exp
    } else {
        tol.power
    };
    let tolerance = rel * theory.abs();
    let pass =
        (fit.fitted_exponent - theory).abs() <= tolerance && fit.r_squared >= tol.min_r_squared;
    let verdict = Verdict {
        law: fit.law,
        family: bound.family,
        theory_exponent: theory,
        fitted_exponent: fit.fitted_exponent,
        fitted_k: fit.fitted_k,
        tolerance,
        r_squared: fit.r_squared,
        r_squared_at_theory: fit.r_squared_at_theory,
        min_r_squared: tol.min_r_squared,
        points_used: fit.points_used,
        pass,
    };
    let updated = FitResult {
        theory_exponent: Some(theory),
        tolerance: Some(tolerance),
        verdict: Some(pass),
        ..fit.clone()
    };
    Ok((updated, verdict))
}

/// Fit with the law the classified regime predicts and compare.
pub fn fit_against_theory(
    points: &[LifespanPoint],
    params: &ModelParams,
    options: &FitOptions,
    tol: &Tolerances,
) -> Result<(FitResult, Verdict)> {
    let bound = lifespan_bound(params)?;
    let law = Law::for_family(bound.family);
    let opts = FitOptions {
        aux_exponent: bound.aux_exponent,
        ..*options
    };
    let mut fit = fit_lifespan(points, law, &opts)?;
    if law == Law::ExpLaw {
        fit.r_squared_at_theory = Some(
            exp_law_at(
                &log_pairs(points),
                -bound.epsilon_exponent,
                options.discard_largest,
            )?
            .r_squared,
        );
    }
    compare_to_theory(&fit, &bound, tol)
}

/// Line of `ln T` against `ε^{-s}` at a fixed `s`, from `(ε, ln T)` pairs.
pub fn exp_law_at(points: &[(f64, f64)], s: f64, discard_largest: usize) -> Result<LineFit> {
    exp_law_line(&usable(points, discard_largest)?, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth(f: impl Fn(f64) -> f64) -> Vec<LifespanPoint> {
        (4..=14)
            .map(|k| {
                let epsilon = 2f64.powi(-k);
                LifespanPoint {
                    epsilon,
                    t_hat: f(epsilon),
                }
            })
            .collect()
    }

    #[test]
    fn exact_power_law() {
        let fit = fit_lifespan(&synth(|e| 1.0 / e), Law::PowerLaw, &FitOptions::default()).unwrap();
        assert!((fit.fitted_exponent + 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.points_used, 9);
    }

    #[test]
    fn exact_exp_law_recovers_exponent() {
        let fit = fit_lifespan(
            &synth(|e| (2.0 + 0.3 / e).exp()),
            Law::ExpLaw,
            &FitOptions::default(),
        )
        .unwrap();
        assert!(
            (fit.fitted_exponent + 1.0).abs() < 1e-5,
            "{}",
            fit.fitted_exponent
        );
        assert!((fit.fitted_k.unwrap() - 0.3).abs() < 1e-4);
    }
}
