//! Threshold classification and lifespan bounds.
//!
//! Everything here is closed form in the model parameters. The comparison
//! tolerance for the critical cases is [`CRITICAL_TOL`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ModelParams, Spacetime};

/// Absolute tolerance used to decide `b² = 4m²`.
pub const BALANCE_TOL: f64 = 1e-12;
/// Relative tolerance used to decide `rate = critical rate` and friends.
pub const CRITICAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dissipation {
    /// `b² > 4m²`: two distinct real roots.
    DominantDamping,
    /// `b² = 4m²`: a double root.
    Balanced,
    /// `b² < 4m²`: complex roots.
    DominantMass,
}

/// Roots of `α² - bα + m² = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampingRoots {
    pub kind: Dissipation,
    /// Smaller real root (real part for complex roots).
    pub slow: f64,
    /// Larger real root (real part for complex roots).
    pub fast: f64,
    /// Imaginary part for complex roots, zero otherwise.
    pub frequency: f64,
    pub discriminant: f64,
}

pub fn damping_roots(damping: f64, mass_sq: f64) -> DampingRoots {
    damping_roots_with_tol(damping, mass_sq, BALANCE_TOL)
}

pub fn damping_roots_with_tol(damping: f64, mass_sq: f64, tol: f64) -> DampingRoots {
    let disc = damping * damping - 4.0 * mass_sq;
    if disc.abs() <= tol {
        let half = damping / 2.0;
        return DampingRoots {
            kind: Dissipation::Balanced,
            slow: half,
            fast: half,
            frequency: 0.0,
            discriminant: disc,
        };
    }
    if disc < 0.0 {
        return DampingRoots {
            kind: Dissipation::DominantMass,
            slow: damping / 2.0,
            fast: damping / 2.0,
            frequency: (-disc).sqrt() / 2.0,
            discriminant: disc,
        };
    }
    let root = disc.sqrt();
    let fast = (damping + root) / 2.0;
    // product form avoids cancellation when m² is small
    let slow = if fast > 0.0 { mass_sq / fast } else { 0.0 };
    DampingRoots {
        kind: Dissipation::DominantDamping,
        slow,
        fast,
        frequency: 0.0,
        discriminant: disc,
    }
}

/// Critical exponential rate and critical polynomial exponent of the source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalRates {
    pub rate: f64,
    pub poly: f64,
}

pub fn critical_rates(
    damping: f64,
    mass_sq: f64,
    nonlocal_power: f64,
    power: f64,
) -> Result<CriticalRates> {
    let roots = damping_roots(damping, mass_sq);
    let q = (nonlocal_power + 1.0) * power;
    match roots.kind {
        Dissipation::DominantMass => Err(Error::RegimeMismatch(
            "no critical rate when the mass dominates the damping".into(),
        )),
        Dissipation::DominantDamping => Ok(CriticalRates {
            rate: roots.slow * (q - 1.0),
            poly: -1.0,
        }),
        Dissipation::Balanced => Ok(CriticalRates {
            rate: roots.slow * (q - 1.0),
            poly: -1.0 - q,
        }),
    }
}

/// Which lower bound dominates on the contracting background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractingBranch {
    /// Spatial average dominates; the expanding-background machinery applies
    /// with an effective rate.
    AverageDominant,
    /// The weighted functional built from the Bessel profile dominates.
    WeightedDominant,
}

/// Critical rate on the contracting background and the branch that produced it.
pub fn contracting_critical_rate(
    dim: u32,
    hubble: f64,
    damping: f64,
    mass_sq: f64,
    nonlocal_power: f64,
    power: f64,
) -> Result<(f64, ContractingBranch)> {
    let disc = damping * damping - 4.0 * mass_sq;
    if disc < -BALANCE_TOL {
        return Err(Error::RegimeMismatch(
            "no critical rate when the mass dominates the damping".into(),
        ));
    }
    let root = disc.max(0.0).sqrt();
    let n = dim as f64;
    let lhs = n / 2.0 - root / (2.0 * hubble);
    let rhs = 1.0 / power;
    if lhs <= rhs + CRITICAL_TOL * rhs.abs().max(1.0) {
        let value = average_critical_rate(dim, hubble, damping, mass_sq, nonlocal_power, power);
        Ok((value, ContractingBranch::AverageDominant))
    } else {
        let value = weighted_critical_rate(dim, hubble, damping, nonlocal_power, power);
        Ok((value, ContractingBranch::WeightedDominant))
    }
}

/// Penalty `nH(β+1)(p-1)` that the Hölder step on the growing light cone
/// puts on the contracting background.
pub fn cone_penalty(dim: u32, hubble: f64, nonlocal_power: f64, power: f64) -> f64 {
    dim as f64 * hubble * (nonlocal_power + 1.0) * (power - 1.0)
}

/// Critical rate of the average branch: expanding critical rate plus the cone penalty.
pub fn average_critical_rate(
    dim: u32,
    hubble: f64,
    damping: f64,
    mass_sq: f64,
    nonlocal_power: f64,
    power: f64,
) -> f64 {
    let q = (nonlocal_power + 1.0) * power;
    damping_roots(damping, mass_sq).slow * (q - 1.0)
        + cone_penalty(dim, hubble, nonlocal_power, power)
}

/// Critical rate of the weighted branch.
pub fn weighted_critical_rate(
    dim: u32,
    hubble: f64,
    damping: f64,
    nonlocal_power: f64,
    power: f64,
) -> f64 {
    let n = dim as f64;
    let q = (nonlocal_power + 1.0) * power;
    0.5 * (damping + n * hubble) * (q - 1.0) + n * hubble
        - (n - 1.0) * hubble * (nonlocal_power + 1.0)
        - hubble / power
}

/// Dimension and exponent thresholds on the contracting background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionThresholds {
    /// `√(b²-4m²)/H`.
    pub critical_dim: f64,
    /// Power at which the two branches exchange dominance, present when
    /// `critical_dim < n < critical_dim + 2`.
    pub branch_power: Option<f64>,
    /// Power below which the weighted critical rate is nonpositive; present
    /// when `n > 2 + b/H` and `β > 0`.
    pub nonpositive_power: Option<f64>,
}

pub fn dimension_thresholds(
    dim: u32,
    hubble: f64,
    damping: f64,
    mass_sq: f64,
    nonlocal_power: f64,
) -> Result<DimensionThresholds> {
    let disc = damping * damping - 4.0 * mass_sq;
    if disc < -BALANCE_TOL {
        return Err(Error::RegimeMismatch(
            "dimension thresholds need b² >= 4m²".into(),
        ));
    }
    let root = disc.max(0.0).sqrt();
    let n = dim as f64;
    let critical_dim = root / hubble;
    let branch_power = if n > critical_dim && n < critical_dim + 2.0 {
        Some(2.0 * hubble / (n * hubble - root))
    } else {
        None
    };
    let nonpositive_power = if n > 2.0 + damping / hubble && nonlocal_power > 0.0 {
        let (a, b, c) = nonpositive_power_quadratic(dim, hubble, damping, nonlocal_power);
        let x = (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
        Some(1.0 + x)
    } else {
        None
    };
    Ok(DimensionThresholds {
        critical_dim,
        branch_power,
        nonpositive_power,
    })
}

/// Coefficients `(A, B, C)` of the quadratic `A x² + B x + C = 0` in `x = p - 1`
/// whose positive root defines [`DimensionThresholds::nonpositive_power`].
pub fn nonpositive_power_quadratic(
    dim: u32,
    hubble: f64,
    damping: f64,
    nonlocal_power: f64,
) -> (f64, f64, f64) {
    let n = dim as f64;
    let beta = nonlocal_power;
    let a = (damping + n * hubble) * (beta + 1.0);
    let b = 2.0 * (damping + hubble) * beta + (damping + n * hubble) + hubble;
    let c = -((n - 2.0) * hubble - damping) * beta;
    (a, b, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    Exponential,
    Polynomial,
    Logarithmic,
    BelowThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub spacetime: Spacetime,
    pub dissipation: Dissipation,
    pub growth: Growth,
    pub branch: Option<ContractingBranch>,
    pub critical_rate: Option<f64>,
    pub critical_poly: Option<f64>,
    pub contracting_critical_rate: Option<f64>,
    pub dimensions: Option<DimensionThresholds>,
    pub notes: Vec<String>,
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= CRITICAL_TOL * a.abs().max(b.abs()).max(1.0)
}

fn growth_from(rate: f64, rate_crit: f64, poly: f64, poly_crit: f64) -> Growth {
    if same(rate, rate_crit) {
        if same(poly, poly_crit) {
            Growth::Logarithmic
        } else if poly > poly_crit {
            Growth::Polynomial
        } else {
            Growth::BelowThreshold
        }
    } else if rate > rate_crit {
        Growth::Exponential
    } else {
        Growth::BelowThreshold
    }
}

pub fn classify(params: &ModelParams) -> Result<RegimeReport> {
    params.validate()?;
    let roots = damping_roots(params.damping, params.mass_sq);
    let mut notes = Vec::new();
    if roots.kind == Dissipation::DominantMass {
        notes.push("mass dominates damping: no blow-up threshold is available".into());
        return Ok(RegimeReport {
            spacetime: params.spacetime,
            dissipation: roots.kind,
            growth: Growth::BelowThreshold,
            branch: None,
            critical_rate: None,
            critical_poly: None,
            contracting_critical_rate: None,
            dimensions: None,
            notes,
        });
    }
    let crit = critical_rates(
        params.damping,
        params.mass_sq,
        params.nonlocal_power,
        params.power,
    )?;
    match params.spacetime {
        Spacetime::DeSitter => {
            let growth = growth_from(
                params.growth_rate,
                crit.rate,
                params.poly_exponent,
                crit.poly,
            );
            Ok(RegimeReport {
                spacetime: params.spacetime,
                dissipation: roots.kind,
                growth,
                branch: None,
                critical_rate: Some(crit.rate),
                critical_poly: Some(crit.poly),
                contracting_critical_rate: None,
                dimensions: None,
                notes,
            })
        }
        Spacetime::AntiDeSitter => {
            let (rho_crit, branch) = contracting_critical_rate(
                params.dim,
                params.hubble,
                params.damping,
                params.mass_sq,
                params.nonlocal_power,
                params.power,
            )?;
            let dims = dimension_thresholds(
                params.dim,
                params.hubble,
                params.damping,
                params.mass_sq,
                params.nonlocal_power,
            )?;
            let growth = growth_from(
                params.growth_rate,
                rho_crit,
                params.poly_exponent,
                crit.poly,
            );
            if branch == ContractingBranch::WeightedDominant && growth != Growth::Exponential {
                notes.push("critical case on the weighted branch has no lifespan estimate".into());
            }
            if let Some(p0) = dims.nonpositive_power {
                if params.power < p0 {
                    notes.push("power below the nonpositive-rate threshold".into());
                }
            }
            Ok(RegimeReport {
                spacetime: params.spacetime,
                dissipation: roots.kind,
                growth,
                branch: Some(branch),
                critical_rate: Some(crit.rate),
                critical_poly: Some(crit.poly),
                contracting_critical_rate: Some(rho_crit),
                dimensions: Some(dims),
                notes,
            })
        }
    }
}

/// Shape of the lifespan upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundFamily {
    /// `g(T) ≤ C ε^{e}` with `g(τ) = e^τ τ^{aux}`, expanding background.
    ExpExpanding,
    /// Same shape, contracting background, average branch.
    ExpContractingAverage,
    /// Same shape, contracting background, weighted branch.
    ExpContractingWeighted,
    /// `T ≤ C ε^{e}`.
    PowerLaw,
    /// `T ≤ C exp(K ε^{e})`.
    ExpLaw,
}

impl BoundFamily {
    /// True for the three `e^τ τ^{aux}` families.
    pub fn is_implicit(self) -> bool {
        matches!(
            self,
            BoundFamily::ExpExpanding
                | BoundFamily::ExpContractingAverage
                | BoundFamily::ExpContractingWeighted
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifespanBound {
    pub family: BoundFamily,
    /// Exponent of `ε`; inside the exponential for [`BoundFamily::ExpLaw`].
    pub epsilon_exponent: f64,
    /// Exponent of `τ` in `e^τ τ^{aux}` (zero for the explicit families).
    pub aux_exponent: f64,
    pub note: String,
}

pub fn lifespan_bound(params: &ModelParams) -> Result<LifespanBound> {
    let report = classify(params)?;
    let q = params.effective_power();
    let balanced = report.dissipation == Dissipation::Balanced;
    if report.growth == Growth::BelowThreshold {
        return Err(Error::RegimeMismatch(
            "parameters are below the blow-up threshold".into(),
        ));
    }
    let poly = params.poly_exponent;
    let note = "multiplicative constants are not tracked".to_string();
    match report.growth {
        Growth::Exponential => {
            let (family, excess) = match (params.spacetime, report.branch) {
                (Spacetime::DeSitter, _) => (
                    BoundFamily::ExpExpanding,
                    params.growth_rate - report.critical_rate.unwrap_or(0.0),
                ),
                (Spacetime::AntiDeSitter, Some(ContractingBranch::AverageDominant)) => (
                    BoundFamily::ExpContractingAverage,
                    params.growth_rate - report.contracting_critical_rate.unwrap_or(0.0),
                ),
                (Spacetime::AntiDeSitter, _) => (
                    BoundFamily::ExpContractingWeighted,
                    params.growth_rate - report.contracting_critical_rate.unwrap_or(0.0),
                ),
            };
            let aux = if balanced && family != BoundFamily::ExpContractingWeighted {
                (q - 1.0 + poly) / excess
            } else {
                poly / excess
            };
            Ok(LifespanBound {
                family,
                epsilon_exponent: -(q - 1.0) / excess,
                aux_exponent: aux,
                note,
            })
        }
        _ if report.branch == Some(ContractingBranch::WeightedDominant) => Err(Error::Unsupported(
            "critical case on the weighted branch".into(),
        )),
        Growth::Polynomial => {
            let exponent = if balanced {
                -1.0 / ((poly + 2.0) / (q - 1.0) + 1.0)
            } else {
                -(q - 1.0) / (poly + 1.0)
            };
            Ok(LifespanBound {
                family: BoundFamily::PowerLaw,
                epsilon_exponent: exponent,
                aux_exponent: 0.0,
                note,
            })
        }
        Growth::Logarithmic => Ok(LifespanBound {
            family: BoundFamily::ExpLaw,
            epsilon_exponent: -(q - 1.0),
            aux_exponent: 0.0,
            note,
        }),
        Growth::BelowThreshold => unreachable!(),
    }
}

/// `ln(e^τ τ^{aux})`.
pub fn log_implicit_profile(aux: f64, tau: f64) -> f64 {
    if aux == 0.0 {
        tau
    } else {
        tau + aux * tau.ln()
    }
}

/// Left end of the interval where `τ ↦ e^τ τ^{aux}` is increasing.
pub fn implicit_profile_start(aux: f64) -> f64 {
    if aux < 0.0 {
        -aux
    } else {
        0.0
    }
}

/// Inverse of `τ ↦ e^τ τ^{aux}` on its increasing branch.
pub fn invert_theta(aux: f64, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!(
            "profile value must be positive, got {s}"
        )));
    }
    invert_theta_log(aux, s.ln())
}

/// As [`invert_theta`], with the target given as `ln s`.
pub fn invert_theta_log(aux: f64, log_s: f64) -> Result<f64> {
    if !log_s.is_finite() {
        return Err(Error::Domain("profile value must be finite".into()));
    }
    let start = implicit_profile_start(aux);
    let floor = if start > 0.0 {
        log_implicit_profile(aux, start)
    } else if aux == 0.0 {
        0.0
    } else {
        f64::NEG_INFINITY
    };
    if log_s < floor {
        return Err(Error::Domain(format!(
            "value below the minimum of the profile on its increasing branch (ln {log_s} < {floor})"
        )));
    }
    let g = |tau: f64| log_implicit_profile(aux, tau) - log_s;
    // bracket
    let mut lo = start;
    let mut hi = start.max(1.0);
    while g(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::NonConvergence(
                "could not bracket profile inverse".into(),
            ));
        }
    }
    if aux > 0.0 && lo == 0.0 {
        // g → -∞ at 0; shrink the left end until the sign changes
        lo = hi;
        while g(lo) > 0.0 {
            lo /= 2.0;
            if lo < 1e-300 {
                return Ok(0.0);
            }
        }
    }
    let mut tau = 0.5 * (lo + hi);
    for _ in 0..200 {
        let val = g(tau);
        if val.abs() <= 1e-15 * log_s.abs().max(1.0) {
            break;
        }
        if val > 0.0 {
            hi = tau;
        } else {
            lo = tau;
        }
        let deriv = 1.0 + aux / tau;
        let newton = tau - val / deriv;
        tau = if deriv > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo) <= 1e-14 * hi {
            break;
        }
    }
    Ok(tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn massless_slow_root_is_zero() {
        let r = damping_roots(3.0, 0.0);
        assert_eq!(r.slow, 0.0);
        assert_eq!(r.fast, 3.0);
    }

    #[test]
    fn balanced_detection() {
        let r = damping_roots(2.0, 1.0);
        assert_eq!(r.kind, Dissipation::Balanced);
        let r = damping_roots(1.0, 1.0);
        assert_eq!(r.kind, Dissipation::DominantMass);
    }

    #[test]
    fn invert_examples() {
        let t = invert_theta(1.0, std::f64::consts::E).unwrap();
        assert!((t - 1.0).abs() < 1e-12);
        let t = invert_theta(0.0, 10.0).unwrap();
        assert!((t - 10f64.ln()).abs() < 1e-12);
        assert!(invert_theta(0.0, 0.5).is_err());
        let t = invert_theta(-2.0, 1e6).unwrap();
        assert!(t >= 2.0);
        assert!((log_implicit_profile(-2.0, t) - 1e6f64.ln()).abs() < 1e-10);
    }
}
