//! The averaged dynamics: exact homogeneous solutions, the comparison ODE
//! `U'' + bU' + m²U = C Γ(t) |U|^q` with blow-up detection, the Duhamel
//! reconstruction of the average from a recorded source, and the lower
//! envelope of the weighted average on the contracting background.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ModelParams, Spacetime};
use crate::quad::fit_line;
use crate::regimes::{damping_roots, Dissipation};
use crate::specfun::profiles::{Envelope, TimeProfile};

/// `Γ(t) = μ e^{rate t} (1+t)^{poly}`, evaluated in logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceCoefficient {
    pub amplitude: f64,
    pub growth_rate: f64,
    pub poly_exponent: f64,
}

impl SourceCoefficient {
    pub const UNIT: SourceCoefficient = SourceCoefficient {
        amplitude: 1.0,
        growth_rate: 0.0,
        poly_exponent: 0.0,
    };

    pub fn log_value(&self, t: f64) -> f64 {
        let mut v = self.amplitude.ln() + self.growth_rate * t;
        if self.poly_exponent != 0.0 {
            v += self.poly_exponent * t.ln_1p();
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeProblem {
    pub damping: f64,
    pub mass_sq: f64,
    /// Power `q` of the comparison source.
    pub power: f64,
    /// Frame constant `C ≥ 0`; zero switches the source off.
    pub frame: f64,
    pub source: SourceCoefficient,
    pub u0: f64,
    pub u1: f64,
    pub t_max: f64,
}

impl OdeProblem {
    /// Comparison problem for `params` with initial data `ε (u0, u1)`.
    pub fn from_params(
        params: &ModelParams,
        frame: f64,
        u0: f64,
        u1: f64,
        t_max: f64,
    ) -> OdeProblem {
        OdeProblem {
            damping: params.damping,
            mass_sq: params.mass_sq,
            power: params.effective_power(),
            frame,
            source: SourceCoefficient {
                amplitude: params.amplitude,
                growth_rate: params.growth_rate,
                poly_exponent: params.poly_exponent,
            },
            u0: params.epsilon * u0,
            u1: params.epsilon * u1,
            t_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.power > 1.0) {
            return Err(Error::param(
                "power",
                format!("must exceed 1, got {}", self.power),
            ));
        }
        if !(self.frame >= 0.0) || !self.frame.is_finite() {
            return Err(Error::param("frame", "must be finite and nonnegative"));
        }
        if !(self.source.amplitude > 0.0) {
            return Err(Error::param("amplitude", "must be positive"));
        }
        if !(self.damping >= 0.0 && self.mass_sq >= 0.0) {
            return Err(Error::param(
                "damping",
                "damping and mass must be nonnegative",
            ));
        }
        if !(self.t_max > 0.0) {
            return Err(Error::param("t_max", "must be positive"));
        }
        if !(self.u0 >= 0.0 && self.u1 >= 0.0) || !(self.u0 > 0.0 || self.u1 > 0.0) {
            return Err(Error::param(
                "initial data",
                format!(
                    "need U0, U1 >= 0 with one of them positive, got ({}, {})",
                    self.u0, self.u1
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverControls {
    pub rtol: f64,
    pub atol: f64,
    /// Blow-up is declared once the integrated variable exceeds this.
    pub value_cap: f64,
    /// Smallest admissible step; the floor is raised to a few ulps of `t`.
    pub dt_min: f64,
    /// Accepted steps used for the blow-up extrapolation.
    pub fit_window: usize,
    pub max_steps: usize,
}

impl Default for SolverControls {
    fn default() -> Self {
        SolverControls {
            rtol: 1e-10,
            atol: 1e-12,
            value_cap: 1e12,
            dt_min: 1e-13,
            fit_window: 50,
            max_steps: 5_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    ThresholdAndStepCollapse,
    HorizonReached,
    /// The run failed and was recorded without an estimate (sweeps).
    Tolerance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupEstimate {
    pub blew_up: bool,
    /// Extrapolated blow-up time.
    pub t_hat: Option<f64>,
    /// Last time reached by the integrator.
    pub t_low: f64,
    /// Measured exponent `k` in `U ~ A (T̂ - t)^{-k}` near the end.
    pub fit_exponent: Option<f64>,
    pub steps: usize,
    pub reason: ExitReason,
}

/// `(t, U, U')` at requested output times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeSample {
    pub t: f64,
    pub u: f64,
    pub du: f64,
}

/// Exact solution of `U'' + bU' + m²U = 0`.
pub fn linear_solution(damping: f64, mass_sq: f64, u0: f64, u1: f64, t: f64) -> f64 {
    let (y0, y1) = fundamental_pair(damping, mass_sq, t);
    y0 * u0 + y1 * u1
}

/// The fundamental solutions `(y₀, y₁)` with `y₀(0)=1, y₀'(0)=0, y₁(0)=0, y₁'(0)=1`.
pub fn fundamental_pair(damping: f64, mass_sq: f64, t: f64) -> (f64, f64) {
    let roots = damping_roots(damping, mass_sq);
    match roots.kind {
        Dissipation::DominantDamping => {
            let (a1, a2) = (roots.slow, roots.fast);
            let gap = a2 - a1;
            let e1 = (-a1 * t).exp();
            // e^{-α₁t} - e^{-α₂t} = e^{-α₁t}(1 - e^{-(α₂-α₁)t})
            let diff = -e1 * (-gap * t).exp_m1();
            let y1 = diff / gap;
            (e1 + a1 * y1, y1)
        }
        Dissipation::Balanced => {
            let e = (-0.5 * damping * t).exp();
            ((1.0 + 0.5 * damping * t) * e, t * e)
        }
        Dissipation::DominantMass => {
            let w = roots.frequency;
            let e = (-0.5 * damping * t).exp();
            let (s, c) = (w * t).sin_cos();
            (e * (c + 0.5 * damping * s / w), e * s / w)
        }
    }
}

// Dormand-Prince 5(4)
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

type State = [f64; 2];

fn axpy(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for (c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

/// Right-hand side in the weighted variable `W = e^{ωt} U`, `ω` the slow
/// root (or `b/2` for complex roots). The exponential decay of the linear
/// part is removed, so long runs stay in range.
struct Weighted {
    friction: f64,
    restoring: f64,
    omega: f64,
    frame: f64,
    power: f64,
    source: SourceCoefficient,
}

impl Weighted {
    fn new(p: &OdeProblem) -> Self {
        let omega = damping_roots(p.damping, p.mass_sq).slow;
        Weighted {
            friction: p.damping - 2.0 * omega,
            restoring: p.mass_sq - p.damping * omega + omega * omega,
            omega,
            frame: p.frame,
            power: p.power,
            source: p.source,
        }
    }

    fn rhs(&self, t: f64, y: &State) -> State {
        let mut acc = -self.friction * y[1] - self.restoring * y[0];
        if self.frame > 0.0 && y[0] != 0.0 {
            let log_gain =
                self.frame.ln() + self.source.log_value(t) - (self.power - 1.0) * self.omega * t;
            acc += (log_gain + self.power * y[0].abs().ln()).exp();
        }
        [y[1], acc]
    }

    fn to_average(&self, t: f64, y: &State) -> (f64, f64) {
        let decay = (-self.omega * t).exp();
        (decay * y[0], decay * (y[1] - self.omega * y[0]))
    }
}

/// Integrate the comparison ODE until blow-up or `t_max`.
pub fn integrate_comparison(problem: &OdeProblem) -> Result<BlowupEstimate> {
    integrate_comparison_with(problem, &SolverControls::default())
}

pub fn integrate_comparison_with(
    problem: &OdeProblem,
    controls: &SolverControls,
) -> Result<BlowupEstimate> {
    integrate_with(problem, controls, &[]).map(|(est, _)| est)
}

/// As [`integrate_comparison`], also sampling `(t, U, U')` at `outputs`
/// (sorted, inside `[0, t_max]`). Steps are shortened to land on them.
pub fn integrate_with(
    problem: &OdeProblem,
    controls: &SolverControls,
    outputs: &[f64],
) -> Result<(BlowupEstimate, Vec<OdeSample>)> {
    problem.validate()?;
    if outputs.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("outputs", "sample times must be sorted"));
    }
    let sys = Weighted::new(problem);
    let q = problem.power;
    let mut t = 0.0f64;
    let mut y: State = [problem.u0, problem.u1 + sys.omega * problem.u0];
    let mut samples = Vec::with_capacity(outputs.len());
    let mut next_out = 0usize;
    while next_out < outputs.len() && outputs[next_out] <= 0.0 {
        let (u, du) = sys.to_average(0.0, &y);
        samples.push(OdeSample {
            t: outputs[next_out],
            u,
            du,
        });
        next_out += 1;
    }
    let mut history: std::collections::VecDeque<(f64, f64)> =
        std::collections::VecDeque::with_capacity(controls.fit_window + 1);
    history.push_back((t, y[0]));

    let mut dt = (1e-3 * problem.t_max).min(1e-2);
    let mut k1 = sys.rhs(t, &y);
    let mut steps = 0usize;
    let order_exp = 1.0 / 5.0;
    loop {
        if t >= problem.t_max {
            return Ok((
                BlowupEstimate {
                    blew_up: false,
                    t_hat: None,
                    t_low: t,
                    fit_exponent: None,
                    steps,
                    reason: ExitReason::HorizonReached,
                },
                samples,
            ));
        }
        if steps >= controls.max_steps {
            return Err(Error::SolverFailure {
                t,
                reason: format!("step budget of {} exhausted", controls.max_steps),
            });
        }
        let floor = controls.dt_min.max(8.0 * f64::EPSILON * t.abs());
        let mut h = dt.min(problem.t_max - t);
        let mut lands_on_output = false;
        if next_out < outputs.len() && t + h >= outputs[next_out] {
            h = outputs[next_out] - t;
            lands_on_output = true;
        }
        if h < floor && !lands_on_output {
            // the controller cannot follow the solution any further: a
            // singularity if the value is already large, a failure otherwise
            if y[0].abs() > controls.value_cap.sqrt() {
                return Ok((blowup_at(t, steps, history.make_contiguous(), q), samples));
            }
            return Err(Error::SolverFailure {
                t,
                reason: format!(
                    "step collapsed to {h:e} with value {:e} far below the cap",
                    y[0]
                ),
            });
        }

        let k2 = sys.rhs(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = sys.rhs(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = sys.rhs(
            t + C4 * h,
            &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        );
        let k5 = sys.rhs(
            t + C5 * h,
            &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = sys.rhs(
            t + h,
            &axpy(
                &y,
                h,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        );
        let y_new = axpy(
            &y,
            h,
            &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
        );
        let k7 = sys.rhs(t + h, &y_new);
        let mut err = 0.0;
        for i in 0..2 {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = controls.atol + controls.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / scale).powi(2);
        }
        let err = (err / 2.0).sqrt();

        if !err.is_finite() || err > 1.0 {
            let factor = if err.is_finite() {
                (0.9 * err.powf(-order_exp)).max(0.1)
            } else {
                0.1
            };
            dt = h * factor;
            continue;
        }

        steps += 1;
        t = if lands_on_output {
            outputs[next_out]
        } else {
            t + h
        };
        y = y_new;
        k1 = k7;
        history.push_back((t, y[0]));
        if history.len() > controls.fit_window {
            history.pop_front();
        }
        while next_out < outputs.len() && outputs[next_out] <= t {
            let (u, du) = sys.to_average(t, &y);
            samples.push(OdeSample {
                t: outputs[next_out],
                u,
                du,
            });
            next_out += 1;
        }
        if y[0].abs() > controls.value_cap {
            return Ok((blowup_at(t, steps, history.make_contiguous(), q), samples));
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-order_exp)).clamp(0.2, 5.0)
        };
        // keep the controller step when the last one was cut short by an output
        dt = if lands_on_output {
            dt.max(h * factor)
        } else {
            h * factor
        };
    }
}

fn blowup_at(t: f64, steps: usize, window: &[(f64, f64)], q: f64) -> BlowupEstimate {
    let (t_hat, exponent) = extrapolate_blowup(window, q);
    BlowupEstimate {
        blew_up: true,
        t_hat: Some(t_hat.max(t)),
        t_low: t,
        fit_exponent: exponent,
        steps,
        reason: ExitReason::ThresholdAndStepCollapse,
    }
}

/// Zero of the line through `W^{-(q-1)/2}` over the window, and the growth
/// exponent from `ln W` against `ln(T̂ - t)`.
pub fn extrapolate_blowup(window: &[(f64, f64)], q: f64) -> (f64, Option<f64>) {
    let last_t = window.last().map(|p| p.0).unwrap_or(0.0);
    let ts: Vec<f64> = window.iter().map(|p| p.0).collect();
    let vs: Vec<f64> = window
        .iter()
        .map(|p| p.1.abs().powf(-(q - 1.0) / 2.0))
        .collect();
    let t_hat = match fit_line(&ts, &vs) {
        Some(fit) if fit.slope < 0.0 => -fit.intercept / fit.slope,
        _ => last_t,
    };
    let (xs, ys): (Vec<f64>, Vec<f64>) = window
        .iter()
        .filter(|p| t_hat - p.0 > 0.0)
        .map(|p| ((t_hat - p.0).ln(), p.1.abs().ln()))
        .unzip();
    let exponent = fit_line(&xs, &ys).map(|f| -f.slope);
    (t_hat, exponent)
}

/// `y₁(s)` for `b² ≥ 4m²`.
fn duhamel_kernel(damping: f64, mass_sq: f64, s: f64) -> f64 {
    fundamental_pair(damping, mass_sq, s).1
}

/// `U(t_k) = U_lin(t_k) + ∫_0^{t_k} y₁(t_k - τ) F(τ) dτ` on the uniform grid
/// `t_k = k·dt`, with `F` the recorded source `Γ(τ)(∫|u|^p)^{β+1}`.
///
/// Composite Simpson is used on an even number of intervals; an odd count
/// takes the Simpson 3/8 rule on the last three.
pub fn duhamel_reconstruct(
    damping: f64,
    mass_sq: f64,
    u0: f64,
    u1: f64,
    dt: f64,
    forcing: &[f64],
) -> Result<Vec<f64>> {
    if forcing.len() < 8 {
        return Err(Error::InsufficientData(format!(
            "Duhamel reconstruction needs at least 8 samples, got {}",
            forcing.len()
        )));
    }
    if damping * damping < 4.0 * mass_sq * (1.0 - 1e-12) {
        return Err(Error::Unsupported(
            "Duhamel reconstruction needs b² ≥ 4m²".into(),
        ));
    }
    if !(dt > 0.0) {
        return Err(Error::param("dt", "must be positive"));
    }
    let kernel: Vec<f64> = (0..forcing.len())
        .map(|i| duhamel_kernel(damping, mass_sq, i as f64 * dt))
        .collect();
    let mut out = Vec::with_capacity(forcing.len());
    for k in 0..forcing.len() {
        let t = k as f64 * dt;
        let f = |i: usize| kernel[k - i] * forcing[i];
        let integral = match k {
            0 => 0.0,
            // quadratic through the first three samples, kernel continued to τ > t
            1 => {
                dt / 12.0
                    * (5.0 * f(0) + 8.0 * f(1) - duhamel_kernel(damping, mass_sq, -dt) * forcing[2])
            }
            _ => {
                let (simpson_end, tail) = if k % 2 == 0 {
                    (k, 0.0)
                } else if k >= 3 {
                    let j = k - 3;
                    (
                        j,
                        3.0 * dt / 8.0 * (f(j) + 3.0 * f(j + 1) + 3.0 * f(j + 2) + f(k)),
                    )
                } else {
                    unreachable!()
                };
                let mut s = 0.0;
                if simpson_end > 0 {
                    s = f(0) + f(simpson_end);
                    for i in 1..simpson_end {
                        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i);
                    }
                    s *= dt / 3.0;
                }
                s + tail
            }
        };
        out.push(linear_solution(damping, mass_sq, u0, u1, t) + integral);
    }
    Ok(out)
}

/// `∫ v₀ Φ` and `∫ v₁ Φ` for unit-size data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataMoments {
    pub v0_phi: f64,
    pub v1_phi: f64,
}

/// The two regional lower bounds for the weighted average `V₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct V0Bound {
    /// `V₀(0) e^{-bt} λ²(t) / λ²(0)`, dominant near `t = 0`.
    pub initial: f64,
    /// `ε I (λ₀²/(2cΛ₀²)) e^{-Ht} (1 - exp(-(2c/H)(e^{Ht}-1)))`, dominant later.
    pub integral: f64,
    pub value: f64,
}

/// Precomputed profile and envelope for repeated evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct V0Envelope {
    profile: TimeProfile,
    envelope: Envelope,
    epsilon: f64,
    hubble: f64,
    speed: f64,
    damping: f64,
    moments: DataMoments,
    log_lambda0: f64,
    /// `I[v₀, v₁] = λ(0) ∫v₁Φ + (bλ(0) - λ'(0)) ∫v₀Φ`.
    pub data_integral: f64,
}

impl V0Envelope {
    pub fn new(params: &ModelParams, moments: DataMoments) -> Result<Self> {
        if params.spacetime != Spacetime::AntiDeSitter {
            return Err(Error::Unsupported(
                "the V₀ envelope is for the contracting background".into(),
            ));
        }
        let profile = TimeProfile::new(params)?;
        let envelope = Envelope::calibrate(&profile)?;
        let lambda0 = profile.value(0.0)?;
        let dlambda0 = profile.derivative(0.0)?;
        let data_integral =
            lambda0 * moments.v1_phi + (params.damping * lambda0 - dlambda0) * moments.v0_phi;
        Ok(V0Envelope {
            profile,
            envelope,
            epsilon: params.epsilon,
            hubble: params.hubble,
            speed: params.speed,
            damping: params.damping,
            moments,
            log_lambda0: lambda0.ln(),
            data_integral,
        })
    }

    pub fn at(&self, t: f64) -> Result<V0Bound> {
        let log_ratio = 2.0 * (self.profile.log_value(t)? - self.log_lambda0) - self.damping * t;
        let v0_at_zero = self.epsilon * self.log_lambda0.exp() * self.moments.v0_phi;
        let initial = v0_at_zero * log_ratio.exp();
        let reach = 2.0 * self.speed / self.hubble * (self.hubble * t).exp_m1();
        let ratio = (self.envelope.lower / self.envelope.upper).powi(2);
        let integral = self.epsilon * self.data_integral * ratio / (2.0 * self.speed)
            * (-self.hubble * t).exp()
            * -(-reach).exp_m1();
        Ok(V0Bound {
            initial,
            integral,
            value: initial.max(integral),
        })
    }
}

/// Lower envelope of `V₀(t)` from the first-order differential inequality.
pub fn v0_lower_envelope(t: f64, params: &ModelParams, moments: DataMoments) -> Result<V0Bound> {
    V0Envelope::new(params, moments)?.at(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_examples() {
        let v = linear_solution(3.0, 2.0, 1.0, 0.0, 2f64.ln());
        assert!((v - 0.75).abs() < 1e-14);
        let v = linear_solution(2.0, 1.0, 0.0, 1.0, 1.0);
        assert!((v - (-1f64).exp()).abs() < 1e-15);
        let v = linear_solution(0.0, 1.0, 1.0, 0.0, std::f64::consts::PI);
        assert!((v + 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_zero_data() {
        let p = OdeProblem {
            damping: 1.0,
            mass_sq: 0.0,
            power: 2.0,
            frame: 1.0,
            source: SourceCoefficient::UNIT,
            u0: 0.0,
            u1: 0.0,
            t_max: 1.0,
        };
        assert!(integrate_comparison(&p).is_err());
    }
}
