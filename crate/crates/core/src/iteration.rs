//! Slicing iteration for the lower bounds of the averaged functional.
//!
//! Each variant feeds a lower bound of the form `C_j × (shape in t)` back into
//! the double-integral frame, shrinks the integration domain by the slicing
//! factors `ℓ_k`, and obtains the next bound. The coefficients `C_j` grow
//! doubly exponentially and are kept as natural logs throughout.
//!
//! Besides the exact recursion the trace carries the *floor* sequence
//! `ln Ĉ_{j+1} = ln K - s (j+1) ln base + q ln Ĉ_j`, which saturates the
//! uniform lower bound `C_{j+1} ≥ K base^{-s(j+1)} C_j^q` used to prove
//! divergence. `K` is the case constant (D, B, E, F or G).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ModelParams, Spacetime};
use crate::regimes::{
    classify, cone_penalty, damping_roots, implicit_profile_start, invert_theta_log,
    weighted_critical_rate, ContractingBranch, Dissipation, Growth,
};

const LN_2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Exponential growth: two slices per step, `ℓ_k = 1 + q^{-k/2}`.
    Exponential2Step,
    /// Polynomial growth with dominant damping, `ℓ_k = 1 + q^{-k}`.
    PolynomialDominant,
    /// Logarithmic growth with dominant damping, same slicing.
    LogDominant,
    /// Logarithmic growth, balanced damping and mass, `L_j = 2 - 2^{-j}`.
    LogBalanced,
    /// Contracting background, weighted branch, seeded by the nonlinear bound.
    AntiDsExponential,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Exponential2Step,
        Variant::PolynomialDominant,
        Variant::LogDominant,
        Variant::LogBalanced,
        Variant::AntiDsExponential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Exponential2Step => "exponential_2_step",
            Variant::PolynomialDominant => "polynomial_dominant",
            Variant::LogDominant => "log_dominant",
            Variant::LogBalanced => "log_balanced",
            Variant::AntiDsExponential => "anti_ds_exponential",
        }
    }

    /// Two slices per iteration step, so step `j` lives on `t ≥ L_{2j}`.
    pub fn is_two_step(self) -> bool {
        matches!(self, Variant::Exponential2Step | Variant::AntiDsExponential)
    }

    /// `(s, base)` in the floor recursion `C_{j+1} ≥ K base^{-s(j+1)} C_j^q`.
    fn floor_decay(self, q: f64) -> (f64, f64) {
        match self {
            Variant::Exponential2Step | Variant::AntiDsExponential => (6.0, q),
            Variant::PolynomialDominant | Variant::LogDominant => (3.0, q),
            Variant::LogBalanced => (1.0, 2.0 * q),
        }
    }

    /// Letter used for the case constant.
    pub fn constant_name(self) -> &'static str {
        match self {
            Variant::Exponential2Step => "D",
            Variant::PolynomialDominant => "B",
            Variant::LogDominant => "E",
            Variant::LogBalanced => "F",
            Variant::AntiDsExponential => "G",
        }
    }

    /// Variant matching the regime of `params`.
    pub fn select(params: &ModelParams) -> Result<Variant> {
        let report = classify(params)?;
        let balanced = report.dissipation == Dissipation::Balanced;
        if report.branch == Some(ContractingBranch::WeightedDominant) {
            return if report.growth == Growth::Exponential {
                Ok(Variant::AntiDsExponential)
            } else {
                Err(Error::Unsupported(
                    "critical case on the weighted branch".into(),
                ))
            };
        }
        match (report.growth, balanced) {
            (Growth::Exponential, _) => Ok(Variant::Exponential2Step),
            (Growth::Polynomial, false) => Ok(Variant::PolynomialDominant),
            (Growth::Polynomial, true) => Err(Error::Unsupported(
                "balanced polynomial case blows up by a comparison lemma, not by slicing".into(),
            )),
            (Growth::Logarithmic, false) => Ok(Variant::LogDominant),
            (Growth::Logarithmic, true) => Ok(Variant::LogBalanced),
            (Growth::BelowThreshold, _) => Err(Error::RegimeMismatch(
                "parameters are below the blow-up threshold".into(),
            )),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "exponential2step" | "exponential" => Ok(Variant::Exponential2Step),
            "polynomialdominant" | "polynomial" => Ok(Variant::PolynomialDominant),
            "logdominant" => Ok(Variant::LogDominant),
            "logbalanced" => Ok(Variant::LogBalanced),
            "antidsexponential" | "antidesitterexponential" => Ok(Variant::AntiDsExponential),
            _ => Err(Error::param(
                "variant",
                format!("unknown slicing variant `{s}`"),
            )),
        }
    }
}

/// Data-dependent constants that the analysis leaves implicit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationConstants {
    /// `K₀` (or `K₁` for [`Variant::AntiDsExponential`]) in the first lower bound.
    pub seed: f64,
    /// Constant `C` in front of the iteration frame.
    pub frame: f64,
}

impl Default for IterationConstants {
    fn default() -> Self {
        IterationConstants {
            seed: 1.0,
            frame: 1.0,
        }
    }
}

/// Slicing factors and their partial products `L_j = Π_{k≤j} ℓ_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicingSpec {
    pub variant: Variant,
    pub ell0: f64,
    /// `ℓ_0, ℓ_1, …`; empty for [`Variant::LogBalanced`], which prescribes `L_j` directly.
    pub ell: Vec<f64>,
    /// `L_0, L_1, …`.
    pub partial: Vec<f64>,
    /// `lim L_j`.
    pub limit: f64,
}

/// Exponent sequences of the lower bounds. Unused sequences are `None`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Exponents {
    pub a: Option<Vec<f64>>,
    pub b: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub gamma: Option<Vec<f64>>,
    pub d: Option<Vec<f64>>,
}

impl Exponents {
    /// `(name, sequence)` for every sequence present.
    pub fn named(&self) -> Vec<(&'static str, &Vec<f64>)> {
        let mut out = Vec::new();
        for (name, seq) in [
            ("a", &self.a),
            ("b", &self.b),
            ("beta", &self.beta),
            ("gamma", &self.gamma),
            ("d", &self.d),
        ] {
            if let Some(v) = seq {
                out.push((name, v));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub variant: Variant,
    pub j_max: usize,
    pub q: f64,
    pub epsilon: f64,
    pub constants: IterationConstants,
    pub slicing: SlicingSpec,
    /// `ln C_j` from the exact recursion, `j = 0..=j_max`.
    pub log_c: Vec<f64>,
    /// `ln Ĉ_j` from the floor recursion.
    pub log_c_floor: Vec<f64>,
    /// Exponents produced by the recursions.
    pub exponents: Exponents,
    /// The same exponents from their closed forms.
    pub closed: Exponents,
    /// Smallest `j ≥ 0` from which `ln C_j ≥ q^j ln(K̃ ε^{1 or q})` is guaranteed.
    pub start_index: usize,
    /// `ln` of the case constant `K`.
    pub log_case_constant: f64,
    /// `M₀` (two-step variants).
    pub m0: Option<f64>,
    /// Uniform bound on the slicing factors raised to `b_{j+1}`: `M₁` for
    /// the two-step variants, `M₂` for [`Variant::PolynomialDominant`].
    pub m1: Option<f64>,
    /// `lim ln Ĉ_j / q^j` computed by running the floor recursion to convergence.
    pub floor_limit: f64,
    /// The same limit from its closed form, `ln(K̃ ε)` (or `ln(K̃ ε^q)`).
    pub analytic_limit: f64,
    /// `lim ln C_j / q^j` for the exact recursion.
    pub exact_limit: f64,
    /// `ln` of the rescaled constant entering the onset (`D̂`, `B̂`, `Ẽ`, `F̃`, `Ĝ`).
    pub log_onset_constant: f64,
    model: Model,
}

/// Which coefficient sequence a lower bound is evaluated with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientSource {
    Exact,
    Floor,
}

/// Onset time of divergence of the lower bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Onset {
    /// `ln T`; finite even when `T` overflows.
    pub log_time: f64,
    /// `T` (may be `inf` for the logarithmic variants at small `ε`).
    pub time: f64,
    /// Smallest time at which the asymptotic estimates hold, `max{2L, 1, T̃}`.
    pub threshold: f64,
}

/// Everything the recursions need, fixed by the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Model {
    variant: Variant,
    q: f64,
    ln_mu_c: f64,
    alpha1: f64,
    alpha2: f64,
    /// Exponential rate gained per step: `r` (or the effective rate) for the
    /// expanding variant, `A₀` for the weighted one.
    rate: f64,
    /// `A₁` (weighted variant only).
    loss: f64,
    kappa: f64,
    ell0: f64,
    a0: f64,
    b0: f64,
    beta0: f64,
    gamma0: f64,
    /// `ϱ - ϱ_crit` for the weighted variant, `r - r_crit` for the expanding one.
    excess: f64,
    log_seed: f64,
}

#[derive(Debug, Clone, Copy)]
struct State {
    a: f64,
    b: f64,
    beta: f64,
    gamma: f64,
    d: f64,
}

fn kappa_parts(kappa: f64) -> (f64, f64) {
    (kappa.max(0.0), (-kappa).max(0.0))
}

/// `q^j - 1`, avoiding cancellation when `q^j` is close to 1.
fn qpow_m1(q: f64, j: f64) -> f64 {
    let x = j * q.ln();
    if x < LN_2 {
        x.exp_m1()
    } else {
        q.powf(j) - 1.0
    }
}

fn inadmissible(inequality: String) -> Error {
    Error::RegimeMismatch(format!("inadmissible parameters: {inequality} fails"))
}

impl Model {
    fn new(
        variant: Variant,
        params: &ModelParams,
        constants: &IterationConstants,
    ) -> Result<Model> {
        params.validate()?;
        if !(constants.seed > 0.0) || !constants.seed.is_finite() {
            return Err(Error::param("seed", "must be positive and finite"));
        }
        if !(constants.frame > 0.0) || !constants.frame.is_finite() {
            return Err(Error::param("frame", "must be positive and finite"));
        }
        let q = params.effective_power();
        let roots = damping_roots(params.damping, params.mass_sq);
        let (alpha1, alpha2) = (roots.slow, roots.fast);
        let ln_mu_c = params.amplitude.ln() + constants.frame.ln();
        let ln_eps = params.epsilon.ln();
        let kappa = params.poly_exponent;
        let balanced = roots.kind == Dissipation::Balanced;
        let mut m = Model {
            variant,
            q,
            ln_mu_c,
            alpha1,
            alpha2,
            rate: 0.0,
            loss: 0.0,
            kappa,
            ell0: 1.0,
            a0: 0.0,
            b0: 0.0,
            beta0: 0.0,
            gamma0: 0.0,
            excess: 0.0,
            log_seed: constants.seed.ln() + ln_eps,
        };
        match variant {
            Variant::Exponential2Step => {
                if roots.kind == Dissipation::DominantMass {
                    return Err(inadmissible("b² ≥ 4m²".into()));
                }
                let r = match params.spacetime {
                    Spacetime::DeSitter => params.growth_rate,
                    Spacetime::AntiDeSitter => {
                        params.growth_rate
                            - cone_penalty(
                                params.dim,
                                params.hubble,
                                params.nonlocal_power,
                                params.power,
                            )
                    }
                };
                if !(r + alpha2 > 0.0) {
                    return Err(inadmissible(format!("r + α₂ > 0 (r = {r}, α₂ = {alpha2})")));
                }
                if !(r + alpha1 > 0.0) {
                    return Err(inadmissible(format!("r + α₁ > 0 (r = {r}, α₁ = {alpha1})")));
                }
                let r_crit = alpha1 * (q - 1.0);
                if !(r > r_crit) {
                    return Err(inadmissible(format!(
                        "r > r_crit (r = {r}, r_crit = {r_crit})"
                    )));
                }
                m.rate = r;
                m.excess = r - r_crit;
                m.ell0 = (1.0 / (r + alpha1)).max(1.0 / (r + alpha2));
                m.a0 = -alpha1;
                m.b0 = if balanced { 1.0 } else { 0.0 };
            }
            Variant::PolynomialDominant | Variant::LogDominant => {
                if roots.kind != Dissipation::DominantDamping {
                    return Err(inadmissible("b² > 4m²".into()));
                }
                m.ell0 = 1.0 / (alpha2 - alpha1);
            }
            Variant::LogBalanced => {
                if roots.kind != Dissipation::Balanced {
                    return Err(inadmissible("b² = 4m²".into()));
                }
            }
            Variant::AntiDsExponential => {
                if params.spacetime != Spacetime::AntiDeSitter {
                    return Err(inadmissible("contracting background".into()));
                }
                if roots.kind == Dissipation::DominantMass {
                    return Err(inadmissible("b² ≥ 4m²".into()));
                }
                let n = params.dim as f64;
                let h = params.hubble;
                let beta = params.nonlocal_power;
                let p = params.power;
                let rho_crit = weighted_critical_rate(params.dim, h, params.damping, beta, p);
                let excess = params.growth_rate - rho_crit;
                if !(excess > 0.0) {
                    return Err(inadmissible(format!(
                        "ϱ > ϱ_crit (ϱ = {}, ϱ_crit = {rho_crit})",
                        params.growth_rate
                    )));
                }
                let gain = excess + 0.5 * (params.damping + n * h) * (q - 1.0) + h * (beta + 1.0);
                m.rate = gain;
                m.loss = n * h * (q - 1.0) + h / p;
                m.excess = excess;
                m.ell0 = (1.0 / (gain + alpha1)).max(1.0 / (gain + alpha2));
                m.a0 = excess + n * h / 2.0;
                m.gamma0 = params.damping / 2.0 + h / p;
                (m.b0, m.beta0) = kappa_parts(kappa);
                m.log_seed = constants.seed.ln() + q * ln_eps;
            }
        }
        Ok(m)
    }

    fn kp(&self) -> f64 {
        kappa_parts(self.kappa).0
    }

    fn km(&self) -> f64 {
        kappa_parts(self.kappa).1
    }

    /// `ℓ_k` for `k ≥ 1` (not used by [`Variant::LogBalanced`]).
    fn ln_ell(&self, k: usize) -> f64 {
        let k = k as f64;
        if self.variant.is_two_step() {
            (-0.5 * k * self.q.ln()).exp().ln_1p()
        } else {
            (-k * self.q.ln()).exp().ln_1p()
        }
    }

    /// `L_j = 2 - 2^{-j}` for [`Variant::LogBalanced`].
    fn balanced_partial(j: usize) -> f64 {
        2.0 - (-(j as f64) * LN_2).exp()
    }

    fn initial(&self) -> State {
        State {
            a: self.a0,
            b: self.b0,
            beta: self.beta0,
            gamma: self.gamma0,
            d: 0.0,
        }
    }

    /// Advance the exponents from step `j` and return the increment
    /// `ln C_{j+1} - q ln C_j`.
    fn advance(&self, j: usize, s: &State) -> Result<(f64, State)> {
        let q = self.q;
        let ln_q = q.ln();
        let jf = j as f64;
        let (kp, km) = (self.kp(), self.km());
        let mut next = *s;
        let inc = match self.variant {
            Variant::Exponential2Step | Variant::AntiDsExponential => {
                next.a = self.rate + q * s.a;
                next.b = kp + q * s.b;
                next.beta = km + q * s.beta;
                if self.variant == Variant::AntiDsExponential {
                    next.gamma = self.loss + q * s.gamma;
                }
                let d1 = self.alpha1 + next.a;
                let d2 = self.alpha2 + next.a;
                if !(d1 > 0.0 && d2 > 0.0) {
                    return Err(Error::Domain(format!(
                        "nonpositive rate α₁ + a_{} = {d1}",
                        j + 1
                    )));
                }
                let slices = self.ln_ell(2 * j + 1) + self.ln_ell(2 * j + 2);
                self.ln_mu_c + 2.0 * (q - 0.5).ln()
                    - next.b * slices
                    - d1.ln()
                    - d2.ln()
                    - (4.0 * jf + 3.0) * ln_q
            }
            Variant::PolynomialDominant => {
                next.b = 1.0 + kp + q * s.b;
                next.beta = km + q * s.beta;
                self.ln_mu_c + (q - 0.5).ln()
                    - (self.alpha2 - self.alpha1).ln()
                    - next.b.ln()
                    - next.b * self.ln_ell(j + 1)
                    - 2.0 * (jf + 1.0) * ln_q
            }
            Variant::LogDominant => {
                next.d = 1.0 + q * s.d;
                self.ln_mu_c + (q - 0.5).ln()
                    - 2.0 * (self.alpha2 - self.alpha1).ln()
                    - (self.ell0 + 1.0).ln()
                    - next.d.ln()
                    - 2.0 * (jf + 1.0) * ln_q
            }
            Variant::LogBalanced => {
                next.d = 1.0 + q * s.d;
                let lj = Self::balanced_partial(j);
                let lnext = Self::balanced_partial(j + 1);
                // 1 - L_j/L_{j+1} = 2^{-(j+1)} / L_{j+1}
                let slice = -(jf + 1.0) * LN_2 - lnext.ln();
                self.ln_mu_c - next.d.ln() - (1.0 + q) * (1.0 / lj).ln_1p() + slice
            }
        };
        Ok((inc, next))
    }

    fn closed(&self, j: usize) -> State {
        let q = self.q;
        let jf = j as f64;
        let g = qpow_m1(q, jf); // q^j - 1
        let (kp, km) = (self.kp(), self.km());
        let mut s = State {
            a: 0.0,
            b: 0.0,
            beta: 0.0,
            gamma: 0.0,
            d: g / (q - 1.0),
        };
        match self.variant {
            Variant::Exponential2Step => {
                let qj = g + 1.0;
                s.a = (self.rate / (q - 1.0) + self.a0) * qj - self.rate / (q - 1.0);
                s.b = (kp / (q - 1.0) + self.b0) * qj - kp / (q - 1.0);
                s.beta = km / (q - 1.0) * g;
            }
            Variant::PolynomialDominant => {
                s.b = (1.0 + kp) / (q - 1.0) * g;
                s.beta = km / (q - 1.0) * g;
            }
            Variant::LogDominant | Variant::LogBalanced => {}
            Variant::AntiDsExponential => {
                let qj = g + 1.0;
                let g1 = qpow_m1(q, jf + 1.0);
                s.a = (self.a0 + self.rate / (q - 1.0)) * qj - self.rate / (q - 1.0);
                s.gamma = (self.gamma0 + self.loss / (q - 1.0)) * qj - self.loss / (q - 1.0);
                s.b = g1 / (q - 1.0) * kp;
                s.beta = g1 / (q - 1.0) * km;
            }
        }
        s
    }

    /// `sup_j` of the slicing factors raised to `b_{j+1}`, including the limit.
    fn slicing_power_bound(&self) -> f64 {
        let q = self.q;
        let ln_q = q.ln();
        let kp = self.kp();
        let mut sup = f64::NEG_INFINITY;
        let mut j = 0usize;
        loop {
            let jf = j as f64;
            let (log_val, x) = match self.variant {
                Variant::Exponential2Step => {
                    let lead = kp / (q - 1.0) + self.b0;
                    let b_next = lead * (ln_q * (jf + 1.0)).exp() - kp / (q - 1.0);
                    let x = (-(jf + 0.5) * ln_q).exp();
                    (
                        b_next * (self.ln_ell(2 * j + 1) + self.ln_ell(2 * j + 2)),
                        x,
                    )
                }
                Variant::AntiDsExponential => {
                    let b_next = qpow_m1(q, jf + 2.0) / (q - 1.0) * kp;
                    let x = (-(jf + 0.5) * ln_q).exp();
                    (
                        b_next * (self.ln_ell(2 * j + 1) + self.ln_ell(2 * j + 2)),
                        x,
                    )
                }
                Variant::PolynomialDominant => {
                    let b_next = (1.0 + kp) / (q - 1.0) * qpow_m1(q, jf + 1.0);
                    let x = (-(jf + 1.0) * ln_q).exp();
                    (b_next * self.ln_ell(j + 1), x)
                }
                _ => return 1.0,
            };
            sup = sup.max(log_val);
            if x < 1e-17 || j > 100_000 {
                break;
            }
            j += 1;
        }
        let limit = match self.variant {
            Variant::Exponential2Step => (kp / (q - 1.0) + self.b0) * (1.0 + q.sqrt()),
            Variant::AntiDsExponential => kp * q / (q - 1.0) * (1.0 + q.sqrt()),
            Variant::PolynomialDominant => (1.0 + kp) / (q - 1.0),
            _ => 0.0,
        };
        sup.max(limit).exp()
    }

    fn m0(&self) -> Option<f64> {
        let q = self.q;
        match self.variant {
            Variant::Exponential2Step => {
                let lead = self.rate / (q - 1.0) + self.a0;
                Some(lead * q + (self.alpha2 - self.rate / (q - 1.0)).max(0.0))
            }
            Variant::AntiDsExponential => Some(self.alpha2 + self.a0 + self.rate / (q - 1.0)),
            _ => None,
        }
    }

    /// `ln K` for the case constant.
    fn log_case_constant(&self, m0: Option<f64>, m1: f64) -> f64 {
        let q = self.q;
        let base = self.ln_mu_c;
        match self.variant {
            Variant::Exponential2Step => {
                let m0 = m0.unwrap_or(1.0);
                base + 2.0 * (q - 0.5).ln() + 3.0 * q.ln() - m1.ln() - 2.0 * m0.ln()
            }
            Variant::PolynomialDominant => {
                base + (q - 0.5).ln() + (q - 1.0).ln()
                    - (self.alpha2 - self.alpha1).ln()
                    - (1.0 + self.kp()).ln()
                    - m1.ln()
            }
            Variant::LogDominant => {
                base + (q - 0.5).ln() + (q - 1.0).ln()
                    - 2.0 * (self.alpha2 - self.alpha1).ln()
                    - (self.ell0 + 1.0).ln()
            }
            Variant::LogBalanced => base - (2.0 + q) * LN_2 + (q - 1.0).ln(),
            Variant::AntiDsExponential => {
                let m0 = m0.unwrap_or(1.0);
                base + q.ln() + 2.0 * (q - 0.5).ln() - 2.0 * m0.ln() - m1.ln()
            }
        }
    }
}

/// Materialize `ℓ_k` and `L_j` for `j ≤ count`.
fn build_slicing(model: &Model, count: usize) -> SlicingSpec {
    let variant = model.variant;
    if variant == Variant::LogBalanced {
        let partial = (0..=count).map(Model::balanced_partial).collect();
        return SlicingSpec {
            variant,
            ell0: 1.0,
            ell: Vec::new(),
            partial,
            limit: 2.0,
        };
    }
    let mut ell = vec![model.ell0];
    let mut partial = vec![model.ell0];
    let mut log_l = model.ell0.ln();
    for k in 1..=count {
        let ln_ell = model.ln_ell(k);
        ell.push(ln_ell.exp());
        log_l += ln_ell;
        partial.push(log_l.exp());
    }
    // keep summing ln ℓ_k until the terms stop mattering
    let mut k = count + 1;
    loop {
        let term = model.ln_ell(k);
        log_l += term;
        if term < 1e-17 * log_l.abs().max(1.0) || k > 1_000_000 {
            break;
        }
        k += 1;
    }
    SlicingSpec {
        variant,
        ell0: model.ell0,
        ell,
        partial,
        limit: log_l.exp(),
    }
}

/// Slicing factors for `variant`, with `L_0..L_{count}` materialized where
/// `count = 2 j_max` for the two-step variants and `j_max` otherwise.
pub fn slicing_sequence(
    variant: Variant,
    params: &ModelParams,
    j_max: usize,
) -> Result<SlicingSpec> {
    let model = Model::new(variant, params, &IterationConstants::default())?;
    let count = if variant.is_two_step() {
        2 * j_max
    } else {
        j_max
    };
    Ok(build_slicing(&model, count))
}

pub fn iterate(variant: Variant, params: &ModelParams, j_max: usize) -> Result<IterationTrace> {
    iterate_with(variant, params, j_max, &IterationConstants::default())
}

pub fn iterate_with(
    variant: Variant,
    params: &ModelParams,
    j_max: usize,
    constants: &IterationConstants,
) -> Result<IterationTrace> {
    let model = Model::new(variant, params, constants)?;
    let q = model.q;
    let count = if variant.is_two_step() {
        2 * j_max
    } else {
        j_max
    };
    let slicing = build_slicing(&model, count);

    let m0 = model.m0();
    let m1 = model.slicing_power_bound();
    let log_k = model.log_case_constant(m0, m1);
    let (s, base) = variant.floor_decay(q);
    let ln_base = base.ln();

    // exact recursion
    let mut log_c = vec![model.log_seed];
    let mut states = vec![model.initial()];
    let mut state = model.initial();
    for j in 0..j_max {
        let (inc, next) = model.advance(j, &state)?;
        log_c.push(q * log_c[j] + inc);
        states.push(next);
        state = next;
    }
    // floor recursion
    let mut log_c_floor = vec![model.log_seed];
    for j in 0..j_max {
        log_c_floor.push(log_k - s * (j as f64 + 1.0) * ln_base + q * log_c_floor[j]);
    }

    // normalized limits, by running both recursions until the increments die out
    let floor_limit = {
        let mut norm = model.log_seed;
        let mut scale = 1.0f64;
        let mut j = 0usize;
        loop {
            scale *= q;
            let term = (log_k - s * (j as f64 + 1.0) * ln_base) / scale;
            norm += term;
            if (term.abs() < 1e-17 * norm.abs().max(1.0) && j > 2) || !scale.is_finite() {
                break;
            }
            j += 1;
        }
        norm
    };
    let exact_limit = {
        let mut norm = model.log_seed;
        let mut scale = 1.0f64;
        let mut st = model.initial();
        let mut j = 0usize;
        loop {
            let (inc, next) = model.advance(j, &st)?;
            scale *= q;
            let term = inc / scale;
            norm += term;
            st = next;
            if (term.abs() < 1e-17 * norm.abs().max(1.0) && j > 2) || !scale.is_finite() {
                break;
            }
            j += 1;
        }
        norm
    };
    let analytic_limit = model.log_seed - s * q * ln_base / (q - 1.0).powi(2) + log_k / (q - 1.0);

    let start = log_k / (s * ln_base) - q / (q - 1.0);
    let start_index = if start <= 0.0 {
        0
    } else {
        start.ceil() as usize
    };

    // rescaled constant used by the onset
    let log_tilde = analytic_limit - model.log_seed + constants.seed.ln();
    let (kp, km) = (model.kp(), model.km());
    let log_onset_constant = match variant {
        Variant::Exponential2Step => log_tilde - ((kp + km) / (q - 1.0) + model.b0) * LN_2,
        Variant::PolynomialDominant => log_tilde - (1.0 + kp + km) / (q - 1.0) * LN_2,
        Variant::LogDominant | Variant::LogBalanced => log_tilde,
        Variant::AntiDsExponential => log_tilde - (kp + km) * q / (q - 1.0) * LN_2,
    };

    let pick = |f: fn(&State) -> f64, list: &[State]| -> Vec<f64> { list.iter().map(f).collect() };
    let closed_states: Vec<State> = (0..=j_max).map(|j| model.closed(j)).collect();
    let make = |list: &[State]| -> Exponents {
        match variant {
            Variant::Exponential2Step => Exponents {
                a: Some(pick(|s| s.a, list)),
                b: Some(pick(|s| s.b, list)),
                beta: Some(pick(|s| s.beta, list)),
                ..Default::default()
            },
            Variant::PolynomialDominant => Exponents {
                b: Some(pick(|s| s.b, list)),
                beta: Some(pick(|s| s.beta, list)),
                ..Default::default()
            },
            Variant::LogDominant | Variant::LogBalanced => Exponents {
                d: Some(pick(|s| s.d, list)),
                ..Default::default()
            },
            Variant::AntiDsExponential => Exponents {
                a: Some(pick(|s| s.a, list)),
                b: Some(pick(|s| s.b, list)),
                beta: Some(pick(|s| s.beta, list)),
                gamma: Some(pick(|s| s.gamma, list)),
                d: None,
            },
        }
    };

    Ok(IterationTrace {
        variant,
        j_max,
        q,
        epsilon: params.epsilon,
        constants: *constants,
        slicing,
        log_c,
        log_c_floor,
        exponents: make(&states),
        closed: make(&closed_states),
        start_index,
        log_case_constant: log_k,
        m0,
        m1: match variant {
            Variant::LogDominant | Variant::LogBalanced => None,
            _ => Some(m1),
        },
        floor_limit,
        analytic_limit,
        exact_limit,
        log_onset_constant,
        model,
    })
}

impl IterationTrace {
    /// `L_{2j}` for the two-step variants, `L_j` otherwise.
    pub fn step_start(&self, j: usize) -> Result<f64> {
        let idx = if self.variant.is_two_step() { 2 * j } else { j };
        self.slicing
            .partial
            .get(idx)
            .copied()
            .ok_or_else(|| Error::Domain(format!("step {j} beyond the materialized trace")))
    }

    /// Closed form of the floor sequence, `ln Ĉ_j`.
    pub fn floor_closed_form(&self, j: usize) -> f64 {
        let q = self.q;
        let (s, base) = self.variant.floor_decay(q);
        let c = s * base.ln();
        let lk = self.log_case_constant;
        let qj = (j as f64 * q.ln()).exp();
        qj * (self.model.log_seed - c * q / (q - 1.0).powi(2) + lk / (q - 1.0))
            + c * q / (q - 1.0).powi(2)
            + c / (q - 1.0) * j as f64
            - lk / (q - 1.0)
    }

    /// `ln` of the `j`-th lower bound at time `t`, for the functional the
    /// variant iterates on: the average `U` for the expanding exponential
    /// case, `e^{α₁t} U` for the polynomial and logarithmic cases, and the
    /// average `V` for the contracting case.
    pub fn lower_bound_at(&self, j: usize, t: f64) -> Result<f64> {
        self.lower_bound_with(j, t, CoefficientSource::Exact)
    }

    pub fn lower_bound_with(&self, j: usize, t: f64, source: CoefficientSource) -> Result<f64> {
        if j > self.j_max {
            return Err(Error::Domain(format!(
                "step {j} beyond j_max = {}",
                self.j_max
            )));
        }
        let start = self.step_start(j)?;
        if !(t >= start) {
            return Err(Error::Domain(format!(
                "t = {t} below the step start L = {start}"
            )));
        }
        let log_c = match source {
            CoefficientSource::Exact => self.log_c[j],
            CoefficientSource::Floor => self.log_c_floor[j],
        };
        let seq = |v: &Option<Vec<f64>>| v.as_ref().map(|x| x[j]).unwrap_or(0.0);
        let pow = |e: f64, base: f64| if e == 0.0 { 0.0 } else { e * base.ln() };
        let m = &self.model;
        let value = match self.variant {
            Variant::Exponential2Step => {
                if j == 0 && m.b0 == 1.0 {
                    // the first bound carries (1+t), not (t - L₀)
                    return Ok(log_c + m.a0 * t + (1.0 + t).ln());
                }
                log_c + seq(&self.exponents.a) * t + pow(seq(&self.exponents.b), t - start)
                    - pow(seq(&self.exponents.beta), 1.0 + t)
            }
            Variant::PolynomialDominant => {
                log_c + pow(seq(&self.exponents.b), t - start)
                    - pow(seq(&self.exponents.beta), 1.0 + t)
            }
            Variant::LogDominant => log_c + pow(seq(&self.exponents.d), (t / start).ln()),
            Variant::LogBalanced => log_c + t.ln() + pow(seq(&self.exponents.d), (t / start).ln()),
            Variant::AntiDsExponential => {
                log_c
                    + (seq(&self.exponents.a) - seq(&self.exponents.gamma)) * t
                    + pow(seq(&self.exponents.b), t - start)
                    - pow(seq(&self.exponents.beta), 1.0 + t)
            }
        };
        Ok(value)
    }

    /// Time after which the factor multiplying `q^j` in the final lower bound
    /// is positive, so that the bounds diverge as `j → ∞`.
    pub fn divergence_onset(&self) -> Result<Onset> {
        let m = &self.model;
        let q = self.q;
        let ln_eps = self.epsilon.ln();
        let lc = self.log_onset_constant;
        let big_l = self.slicing.limit;
        let mut threshold = (2.0 * big_l).max(1.0);
        let log_time = match self.variant {
            Variant::Exponential2Step => {
                let lead = m.rate / (q - 1.0) + m.a0;
                let aux = (m.kappa + (q - 1.0) * m.b0) / (m.rate + (q - 1.0) * m.a0);
                threshold = threshold.max(implicit_profile_start(aux));
                let target = -(lc + ln_eps) / lead;
                implicit_inverse(aux, target)?.ln()
            }
            Variant::PolynomialDominant => {
                if !(1.0 + m.kappa > 0.0) {
                    return Err(Error::RegimeMismatch(format!(
                        "polynomial onset needs κ > -1, got {}",
                        m.kappa
                    )));
                }
                -(q - 1.0) / (1.0 + m.kappa) * (lc + ln_eps)
            }
            Variant::LogDominant => big_l.ln() + (-(q - 1.0) * (lc + ln_eps)).exp(),
            Variant::LogBalanced => LN_2 + (-(q - 1.0) * (lc + ln_eps)).exp(),
            Variant::AntiDsExponential => {
                let aux = m.kappa / m.excess;
                threshold = threshold.max(implicit_profile_start(aux));
                let target = -(q - 1.0) / m.excess * (lc / q + ln_eps);
                implicit_inverse(aux, target)?.ln()
            }
        };
        if !(log_time >= threshold.ln()) {
            return Err(Error::OutOfAsymptoticRange(format!(
                "onset {} below max{{2L, 1}} = {threshold}; decrease ε",
                log_time.exp()
            )));
        }
        Ok(Onset {
            log_time,
            time: log_time.exp(),
            threshold,
        })
    }

    /// `a₀ - γ₀ + (A₀ - A₁)/(q-1)` for the contracting variant.
    pub fn net_rate(&self) -> Option<f64> {
        let m = &self.model;
        (self.variant == Variant::AntiDsExponential)
            .then(|| m.a0 - m.gamma0 + (m.rate - m.loss) / (m.q - 1.0))
    }

    /// `ϱ - ϱ_crit` (contracting) or `r - r_crit` (expanding exponential).
    pub fn rate_excess(&self) -> Option<f64> {
        self.variant.is_two_step().then_some(self.model.excess)
    }
}

/// Inverse of `τ ↦ e^τ τ^{aux}` at `ln s = target`; targets below the
/// minimum on the increasing branch map to its left end.
fn implicit_inverse(aux: f64, target: f64) -> Result<f64> {
    match invert_theta_log(aux, target) {
        Ok(t) => Ok(t),
        Err(Error::Domain(_)) => Ok(implicit_profile_start(aux).max(f64::MIN_POSITIVE)),
        Err(e) => Err(e),
    }
}
