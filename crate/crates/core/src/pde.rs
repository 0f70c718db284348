//! Radial finite-difference solver for
//! `u_tt - a(t)² Δu + b u_t + m² u = Γ(t) (∫|u|^p)^β |u|^p`
//! on expanding (`a = c e^{-Ht}`) and contracting (`a = c e^{Ht}`) backgrounds.
//!
//! The Laplacian is the finite-volume form of `r^{1-n} ∂_r(r^{n-1} ∂_r u)`,
//! which reduces to `n u_rr` at the origin and makes the discrete average
//! obey the averaged ODE up to the time discretization. Time stepping is
//! leapfrog with the damping averaged over the two outer levels.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{extrapolate_blowup, BlowupEstimate, ExitReason};
use crate::params::{sphere_area, ModelParams, Spacetime};
use crate::quad::simpson_weights;
use crate::specfun::profiles::{log_phi, TimeProfile};

/// Wave speed `a(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveSpeed {
    /// `a ≡ c`, the flat limit used as a d'Alembert control.
    Constant {
        speed: f64,
    },
    Expanding {
        speed: f64,
        hubble: f64,
    },
    Contracting {
        speed: f64,
        hubble: f64,
    },
}

impl WaveSpeed {
    pub fn from_params(params: &ModelParams) -> WaveSpeed {
        match params.spacetime {
            Spacetime::DeSitter => WaveSpeed::Expanding {
                speed: params.speed,
                hubble: params.hubble,
            },
            Spacetime::AntiDeSitter => WaveSpeed::Contracting {
                speed: params.speed,
                hubble: params.hubble,
            },
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        match *self {
            WaveSpeed::Constant { speed } => speed,
            WaveSpeed::Expanding { speed, hubble } => speed * (-hubble * t).exp(),
            WaveSpeed::Contracting { speed, hubble } => speed * (hubble * t).exp(),
        }
    }

    /// Distance `A(t)` covered by a signal since `t = 0`.
    pub fn reach(&self, t: f64) -> f64 {
        match *self {
            WaveSpeed::Constant { speed } => speed * t,
            WaveSpeed::Expanding { speed, hubble } => -speed / hubble * (-hubble * t).exp_m1(),
            WaveSpeed::Contracting { speed, hubble } => speed / hubble * (hubble * t).exp_m1(),
        }
    }

    /// Largest speed on `[t0, t1]`.
    fn max_on(&self, t0: f64, t1: f64) -> f64 {
        self.at(t0).max(self.at(t1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataProfile {
    /// `exp(-1/(1-(r/R)²))` inside the ball.
    Bump,
    /// `(1-(r/R)²)⁴` inside the ball.
    TruncatedPoly,
}

impl DataProfile {
    pub fn value(self, r: f64, radius: f64) -> f64 {
        let s = r / radius;
        if s >= 1.0 {
            return 0.0;
        }
        let w = 1.0 - s * s;
        match self {
            DataProfile::Bump => (-1.0 / w).exp(),
            DataProfile::TruncatedPoly => w.powi(4),
        }
    }
}

impl fmt::Display for DataProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataProfile::Bump => "bump",
            DataProfile::TruncatedPoly => "truncated_poly",
        })
    }
}

impl FromStr for DataProfile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "bump" => Ok(DataProfile::Bump),
            "truncatedpoly" => Ok(DataProfile::TruncatedPoly),
            _ => Err(Error::param(
                "profile",
                format!("unknown data profile `{s}`"),
            )),
        }
    }
}

/// Uniform radial grid `0, h, …, r_max` with an even number of intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    pub dim: u32,
    pub h: f64,
    pub r_max: f64,
    pub points: Vec<f64>,
    /// Finite-volume cell measures (without the sphere area).
    volumes: Vec<f64>,
    /// `r_{i+1/2}^{n-1} / h`.
    flux_right: Vec<f64>,
    /// Simpson weights times `|S^{n-1}| r^{n-1}`.
    quad: Vec<f64>,
}

impl RadialGrid {
    /// Grid reaching at least `R + A(horizon) + 4h`.
    pub fn for_horizon(
        dim: u32,
        h: f64,
        radius: f64,
        speed: &WaveSpeed,
        horizon: f64,
    ) -> Result<RadialGrid> {
        let reach = speed.reach(horizon);
        RadialGrid::new(dim, h, radius + reach + 4.0 * h)
    }

    pub fn new(dim: u32, h: f64, min_extent: f64) -> Result<RadialGrid> {
        if dim == 0 {
            return Err(Error::param("dim", "must be positive"));
        }
        if !(h > 0.0) || !(min_extent > h) {
            return Err(Error::param(
                "h",
                "spacing must be positive and below the extent",
            ));
        }
        let mut intervals = (min_extent / h).ceil() as usize;
        if intervals % 2 == 1 {
            intervals += 1;
        }
        if intervals > 50_000_000 {
            return Err(Error::param("h", "grid too large"));
        }
        let n = dim as i32;
        let points: Vec<f64> = (0..=intervals).map(|i| i as f64 * h).collect();
        let nf = dim as f64;
        let volumes: Vec<f64> = points
            .iter()
            .map(|&r| {
                let hi = (r + 0.5 * h).powi(n);
                let lo = if r == 0.0 { 0.0 } else { (r - 0.5 * h).powi(n) };
                (hi - lo) / nf
            })
            .collect();
        let flux_right: Vec<f64> = points
            .iter()
            .map(|&r| (r + 0.5 * h).powi(n - 1) / h)
            .collect();
        let area = sphere_area(dim);
        let quad = simpson_weights(intervals + 1, h)
            .into_iter()
            .zip(&points)
            .map(|(w, &r)| w * area * r.powi(n - 1))
            .collect();
        Ok(RadialGrid {
            dim,
            h,
            r_max: intervals as f64 * h,
            points,
            volumes,
            flux_right,
            quad,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `|S^{n-1}| ∫ f(r) r^{n-1} dr` by composite Simpson.
    pub fn integrate(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.quad.iter().enumerate().map(|(i, w)| w * f(i)).sum()
    }

    /// Discrete radial Laplacian, with `u = 0` beyond the last node.
    fn laplacian(&self, u: &[f64], out: &mut [f64]) {
        let m = u.len();
        for i in 0..m {
            let right = if i + 1 < m { u[i + 1] - u[i] } else { -u[i] };
            let mut flux = self.flux_right[i] * right;
            if i > 0 {
                flux -= self.flux_right[i - 1] * (u[i] - u[i - 1]);
            }
            out[i] = flux / self.volumes[i];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub u: Vec<f64>,
    pub u_prev: Vec<f64>,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeControls {
    pub h: f64,
    /// Courant number `a dt / h`.
    pub cfl: f64,
    pub horizon: f64,
    /// Observables are recorded on multiples of this.
    pub sample_dt: f64,
    pub u_cap: f64,
    pub dt_min: f64,
    /// Largest relative growth of `max |u|` accepted in one step.
    pub growth_limit: f64,
    pub profile: DataProfile,
    /// Scale of `u_t(0)` relative to `u(0)`.
    pub velocity_scale: f64,
    pub support_tol: f64,
    pub fit_window: usize,
    /// Switches the nonlinear source off (linear control runs).
    pub source_enabled: bool,
    /// Seed for a smooth ±10% modulation of the data profiles.
    pub perturbation_seed: Option<u64>,
}

impl Default for PdeControls {
    fn default() -> Self {
        PdeControls {
            h: 1.0 / 256.0,
            cfl: 0.5,
            horizon: 20.0,
            sample_dt: 1.0 / 64.0,
            u_cap: 1e10,
            dt_min: 1e-12,
            growth_limit: 0.02,
            profile: DataProfile::Bump,
            velocity_scale: 1.0,
            support_tol: 1e-10,
            fit_window: 50,
            source_enabled: true,
            perturbation_seed: None,
        }
    }
}

impl PdeControls {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) {
            return Err(Error::param("h", "must be positive"));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::param("cfl", "must lie in (0, 1]"));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::param("horizon", "must be positive"));
        }
        if !(self.sample_dt > 0.0) || self.sample_dt > self.horizon {
            return Err(Error::param(
                "sample_dt",
                "must be positive and at most the horizon",
            ));
        }
        if !(self.u_cap > 1.0) || !(self.dt_min > 0.0) || !(self.growth_limit > 0.0) {
            return Err(Error::param("u_cap", "caps and limits must be positive"));
        }
        if !(self.velocity_scale >= 0.0) {
            return Err(Error::param("velocity_scale", "must be nonnegative"));
        }
        Ok(())
    }
}

/// `u(0) = ε u₀`, `u_t(0) = ε·scale·u₁` with `u₀ = u₁ = profile`.
pub fn make_initial_data(
    profile: DataProfile,
    radius: f64,
    epsilon: f64,
    velocity_scale: f64,
    grid: &RadialGrid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(radius > 0.0) || radius >= grid.r_max {
        return Err(Error::param(
            "radius",
            format!("must lie in (0, r_max = {})", grid.r_max),
        ));
    }
    let u: Vec<f64> = grid
        .points
        .iter()
        .map(|&r| epsilon * profile.value(r, radius))
        .collect();
    let v = u.iter().map(|x| velocity_scale * x).collect();
    Ok((u, v))
}

/// Multiply both profiles by `1 + Σ_k a_k cos(kπ r/R)`, `k = 1..3`, with
/// `|a_k| ≤ 1/30` drawn from `seed`. Values stay within ±10% and nonnegative.
pub fn perturb_initial_data(
    u: &mut [f64],
    v: &mut [f64],
    grid: &RadialGrid,
    radius: f64,
    seed: u64,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0) / 30.0).collect();
    for (i, &r) in grid.points.iter().enumerate() {
        let factor = 1.0
            + coeffs
                .iter()
                .enumerate()
                .map(|(k, a)| a * ((k + 1) as f64 * std::f64::consts::PI * r / radius).cos())
                .sum::<f64>();
        u[i] *= factor;
        v[i] *= factor;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    /// `U = ∫ u`.
    pub average: f64,
    /// `∫ |u|^p`.
    pub lp_p: f64,
    /// `V₀ = ∫ u λ(t) Φ` (contracting background with `b² ≥ 4m²`).
    pub weighted: Option<f64>,
    pub support_radius: f64,
    /// Share of `∫|u|` outside `B_{R + A(t) + 2h}`.
    pub leakage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeSample {
    pub t: f64,
    pub average: f64,
    pub lp_p: f64,
    pub weighted: Option<f64>,
    pub support_radius: f64,
    pub leakage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeInfo {
    pub h: f64,
    pub cfl: f64,
    pub r_max: f64,
    pub nodes: usize,
    pub initial_dt: f64,
    pub sample_dt: f64,
    pub profile: DataProfile,
    pub source_enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeRun {
    pub samples: Vec<PdeSample>,
    pub blowup: BlowupEstimate,
    pub scheme: SchemeInfo,
    pub max_leakage: f64,
    /// `min_t min_r u / max_r |u|`; negative values are undershoots.
    pub min_ratio: f64,
    /// Source coefficient exponent bookkeeping needed downstream.
    pub params: ModelParams,
}

impl PdeRun {
    /// Uniform sample times, `U`, and `Γ(t)(∫|u|^p)^{β+1}`.
    pub fn forcing_series(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let p = &self.params;
        let times = self.samples.iter().map(|s| s.t).collect();
        let avg = self.samples.iter().map(|s| s.average).collect();
        let force = self
            .samples
            .iter()
            .map(|s| {
                if !self.scheme.source_enabled || s.lp_p == 0.0 {
                    return 0.0;
                }
                (p.log_source_coefficient(s.t) + (p.nonlocal_power + 1.0) * s.lp_p.ln()).exp()
            })
            .collect();
        (times, avg, force)
    }
}

/// Everything the stepper needs besides the state.
pub struct Solver {
    pub grid: RadialGrid,
    pub params: ModelParams,
    pub speed: WaveSpeed,
    pub controls: PdeControls,
    profile: Option<TimeProfile>,
    log_phi: Vec<f64>,
    lap: Vec<f64>,
    src: Vec<f64>,
}

impl Solver {
    pub fn new(params: &ModelParams, controls: &PdeControls) -> Result<Solver> {
        Solver::with_speed(params, WaveSpeed::from_params(params), controls)
    }

    pub fn with_speed(
        params: &ModelParams,
        speed: WaveSpeed,
        controls: &PdeControls,
    ) -> Result<Solver> {
        params.validate()?;
        controls.validate()?;
        let grid = RadialGrid::for_horizon(
            params.dim,
            controls.h,
            params.radius,
            &speed,
            controls.horizon,
        )?;
        let profile = if params.spacetime == Spacetime::AntiDeSitter {
            TimeProfile::new(params).ok()
        } else {
            None
        };
        let log_phi = if profile.is_some() {
            grid.points
                .iter()
                .map(|&r| log_phi(params.dim, r))
                .collect::<Result<Vec<f64>>>()?
        } else {
            Vec::new()
        };
        let m = grid.len();
        Ok(Solver {
            grid,
            params: *params,
            speed,
            controls: *controls,
            profile,
            log_phi,
            lap: vec![0.0; m],
            src: vec![0.0; m],
        })
    }

    /// Stable step for the speed on `[t, t + dt]`.
    fn cfl_limit(&self, t: f64, dt: f64) -> f64 {
        self.controls.cfl * self.grid.h / self.speed.max_on(t, t + dt)
    }

    /// `∫|u|^p` by Simpson.
    pub fn lp_p(&self, u: &[f64]) -> f64 {
        let p = self.params.power;
        self.grid.integrate(|i| u[i].abs().powf(p))
    }

    /// Fills `self.lap` with `a² Δu - m² u + source`, without the damping.
    fn forcing(&mut self, t: f64, u: &[f64]) {
        let a2 = self.speed.at(t).powi(2);
        self.grid.laplacian(u, &mut self.lap);
        let m2 = self.params.mass_sq;
        for (l, &x) in self.lap.iter_mut().zip(u) {
            *l = a2 * *l - m2 * x;
        }
        if self.controls.source_enabled {
            let p = self.params.power;
            let beta = self.params.nonlocal_power;
            let mut log_coef = self.params.log_source_coefficient(t);
            if beta != 0.0 {
                log_coef += beta * self.lp_p(u).ln();
            }
            let coef = log_coef.exp();
            for (s, &x) in self.src.iter_mut().zip(u) {
                *s = coef * x.abs().powf(p);
            }
            for (l, s) in self.lap.iter_mut().zip(&self.src) {
                *l += s;
            }
        }
    }

    /// Initial state, with `u(-dt)` from a second-order Taylor expansion.
    pub fn initial_state(&mut self) -> Result<FieldState> {
        let (mut u, mut v) = make_initial_data(
            self.controls.profile,
            self.params.radius,
            self.params.epsilon,
            self.controls.velocity_scale,
            &self.grid,
        )?;
        if let Some(seed) = self.controls.perturbation_seed {
            perturb_initial_data(&mut u, &mut v, &self.grid, self.params.radius, seed);
        }
        let dt0 = self.cfl_limit(0.0, 0.0);
        let steps_per_sample = (self.controls.sample_dt / dt0).ceil();
        let mut dt = self.controls.sample_dt / steps_per_sample;
        while dt > self.cfl_limit(0.0, dt) {
            dt *= 0.5;
        }
        let u_prev = self.rewind(0.0, &u, &v, dt);
        Ok(FieldState {
            t: 0.0,
            u,
            u_prev,
            dt,
        })
    }

    /// `u(t - s) ≈ u - s v + s²/2 (forcing - b v)`.
    fn rewind(&mut self, t: f64, u: &[f64], v: &[f64], s: f64) -> Vec<f64> {
        self.forcing(t, u);
        let b = self.params.damping;
        u.iter()
            .zip(v)
            .zip(&self.lap)
            .map(|((&x, &vx), &f)| x - s * vx + 0.5 * s * s * (f - b * vx))
            .collect()
    }

    /// Velocity at the current level from the two stored levels.
    fn velocity(&mut self, state: &FieldState) -> Vec<f64> {
        self.forcing(state.t, &state.u);
        let b = self.params.damping;
        let dt = state.dt;
        // backward difference corrected to second order; the damping uses
        // the same lagged velocity, consistent to O(dt²)
        state
            .u
            .iter()
            .zip(&state.u_prev)
            .zip(&self.lap)
            .map(|((&x, &xp), &f)| {
                let back = (x - xp) / dt;
                (back + 0.5 * dt * f) / (1.0 + 0.5 * b * dt)
            })
            .collect()
    }

    /// Replace the step size, rebuilding the previous level.
    pub fn resize_step(&mut self, state: &mut FieldState, dt: f64) {
        let v = self.velocity(state);
        state.u_prev = self.rewind(state.t, &state.u, &v, dt);
        state.dt = dt;
    }

    /// One leapfrog step; returns the new level without committing it.
    fn advance(&mut self, state: &FieldState) -> Vec<f64> {
        self.forcing(state.t, &state.u);
        let dt = state.dt;
        let half_damp = 0.5 * self.params.damping * dt;
        let denom = 1.0 + half_damp;
        state
            .u
            .iter()
            .zip(&state.u_prev)
            .zip(&self.lap)
            .map(|((&x, &xp), &f)| (2.0 * x - (1.0 - half_damp) * xp + dt * dt * f) / denom)
            .collect()
    }

    /// Advance `state` by one step of its current size.
    pub fn step(&mut self, state: &mut FieldState) -> Result<()> {
        if state.dt > self.cfl_limit(state.t, state.dt) * (1.0 + 1e-12) {
            return Err(Error::param(
                "dt",
                format!(
                    "CFL violated: dt = {} exceeds {}",
                    state.dt,
                    self.cfl_limit(state.t, state.dt)
                ),
            ));
        }
        let next = self.advance(state);
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::SolverFailure {
                t: state.t,
                reason: "non-finite values".into(),
            });
        }
        state.u_prev = std::mem::replace(&mut state.u, next);
        state.t += state.dt;
        Ok(())
    }

    pub fn observables(&self, state: &FieldState) -> Result<Observables> {
        let u = &state.u;
        let average = self.grid.integrate(|i| u[i]);
        let lp_p = self.lp_p(u);
        let weighted = match &self.profile {
            Some(profile) => {
                let log_lambda = profile.log_value(state.t)?;
                Some(self.grid.integrate(|i| {
                    if u[i] == 0.0 {
                        0.0
                    } else {
                        u[i] * (log_lambda + self.log_phi[i]).exp()
                    }
                }))
            }
            None => None,
        };
        let peak = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let support_radius = if peak == 0.0 {
            0.0
        } else {
            let tol = self.controls.support_tol * peak;
            u.iter()
                .rposition(|x| x.abs() > tol)
                .map(|i| self.grid.points[i])
                .unwrap_or(0.0)
        };
        let cone = self.params.radius + self.speed.reach(state.t) + 2.0 * self.grid.h;
        let total = self.grid.integrate(|i| u[i].abs());
        let outside = self.grid.integrate(|i| {
            if self.grid.points[i] > cone {
                u[i].abs()
            } else {
                0.0
            }
        });
        let leakage = if total > 0.0 { outside / total } else { 0.0 };
        Ok(Observables {
            average,
            lp_p,
            weighted,
            support_radius,
            leakage,
        })
    }
}

/// Observables of `state` on `grid` for `params`.
pub fn observables(
    state: &FieldState,
    params: &ModelParams,
    controls: &PdeControls,
) -> Result<Observables> {
    Solver::new(params, controls)?.observables(state)
}

/// Run until blow-up, the horizon, or the edge of the grid.
pub fn run_until_blowup(params: &ModelParams, controls: &PdeControls) -> Result<PdeRun> {
    let mut solver = Solver::new(params, controls)?;
    run_solver(&mut solver)
}

pub fn run_with_speed(
    params: &ModelParams,
    speed: WaveSpeed,
    controls: &PdeControls,
) -> Result<PdeRun> {
    let mut solver = Solver::with_speed(params, speed, controls)?;
    run_solver(&mut solver)
}

fn run_solver(solver: &mut Solver) -> Result<PdeRun> {
    let controls = solver.controls;
    let q = solver.params.effective_power();
    let mut state = solver.initial_state()?;
    let scheme = SchemeInfo {
        h: solver.grid.h,
        cfl: controls.cfl,
        r_max: solver.grid.r_max,
        nodes: solver.grid.len(),
        initial_dt: state.dt,
        sample_dt: controls.sample_dt,
        profile: controls.profile,
        source_enabled: controls.source_enabled,
    };
    let mut samples = Vec::new();
    let mut max_leakage = 0.0f64;
    let mut min_ratio = f64::INFINITY;
    let record =
        |solver: &Solver, state: &FieldState, samples: &mut Vec<PdeSample>| -> Result<()> {
            let obs = solver.observables(state)?;
            samples.push(PdeSample {
                t: state.t,
                average: obs.average,
                lp_p: obs.lp_p,
                weighted: obs.weighted,
                support_radius: obs.support_radius,
                leakage: obs.leakage,
            });
            Ok(())
        };
    record(solver, &state, &mut samples)?;
    let mut history: VecDeque<(f64, f64)> = VecDeque::with_capacity(controls.fit_window + 1);
    let mut steps = 0usize;
    let mut next_sample = 1usize;
    let peak = |u: &[f64]| u.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let finish = |blew_up: bool,
                  reason: ExitReason,
                  t: f64,
                  steps: usize,
                  history: &mut VecDeque<(f64, f64)>| {
        let (t_hat, exponent) = if blew_up {
            let (t_hat, e) = extrapolate_blowup(history.make_contiguous(), q);
            (Some(t_hat.max(t)), e)
        } else {
            (None, None)
        };
        BlowupEstimate {
            blew_up,
            t_hat,
            t_low: t,
            fit_exponent: exponent,
            steps,
            reason,
        }
    };

    let blowup = loop {
        let target = next_sample as f64 * controls.sample_dt;
        if state.t >= controls.horizon * (1.0 - 1e-12) {
            break finish(
                false,
                ExitReason::HorizonReached,
                state.t,
                steps,
                &mut history,
            );
        }
        // shrink for the CFL bound
        while state.dt > solver.cfl_limit(state.t, state.dt) {
            let dt = 0.5 * state.dt;
            solver.resize_step(&mut state, dt);
        }
        let old_peak = peak(&state.u);
        let next = solver.advance(&state);
        let new_peak = peak(&next);
        let bad = next.iter().any(|x| !x.is_finite());
        if bad || (old_peak > 0.0 && new_peak > (1.0 + controls.growth_limit) * old_peak) {
            let dt = 0.5 * state.dt;
            if dt < controls.dt_min {
                if old_peak > controls.u_cap.sqrt() {
                    break finish(
                        true,
                        ExitReason::ThresholdAndStepCollapse,
                        state.t,
                        steps,
                        &mut history,
                    );
                }
                return Err(Error::SolverFailure {
                    t: state.t,
                    reason: format!("step collapsed with max |u| = {old_peak:e}"),
                });
            }
            solver.resize_step(&mut state, dt);
            continue;
        }
        state.u_prev = std::mem::replace(&mut state.u, next);
        state.t += state.dt;
        steps += 1;
        // snap onto the sample grid to keep it uniform
        if (state.t - target).abs() <= 1e-9 * state.dt {
            state.t = target;
        }
        let low = state.u.iter().fold(f64::INFINITY, |m, &x| m.min(x));
        if new_peak > 0.0 {
            min_ratio = min_ratio.min(low / new_peak);
        }
        let avg = solver.grid.integrate(|i| state.u[i]);
        history.push_back((state.t, avg));
        if history.len() > controls.fit_window {
            history.pop_front();
        }
        if state.t >= target {
            record(solver, &state, &mut samples)?;
            max_leakage = max_leakage.max(samples.last().unwrap().leakage);
            next_sample += 1;
        }
        if new_peak > controls.u_cap {
            break finish(
                true,
                ExitReason::ThresholdAndStepCollapse,
                state.t,
                steps,
                &mut history,
            );
        }
        // the grid was sized for the horizon; stop if the cone reaches its edge
        let cone = solver.params.radius + solver.speed.reach(state.t) + 2.0 * solver.grid.h;
        if cone > solver.grid.r_max {
            break finish(
                false,
                ExitReason::HorizonReached,
                state.t,
                steps,
                &mut history,
            );
        }
    };
    Ok(PdeRun {
        samples,
        blowup,
        scheme,
        max_leakage,
        min_ratio,
        params: solver.params,
    })
}

/// Largest relative residual of `U'' + bU' + m²U = Γ(t)(∫|u|^p)^{β+1}` over
/// the middle 80% of the samples, with fourth-order central differences.
pub fn ode_consistency_residual(run: &PdeRun) -> Result<f64> {
    let (times, avg, force) = run.forcing_series();
    consistency_residual(&run.params, &times, &avg, &force)
}

pub fn consistency_residual(
    params: &ModelParams,
    times: &[f64],
    avg: &[f64],
    force: &[f64],
) -> Result<f64> {
    let n = times.len();
    if n < 16 {
        return Err(Error::InsufficientData(format!(
            "need at least 16 samples, got {n}"
        )));
    }
    let dt = times[1] - times[0];
    let lo = (n / 10).max(2);
    let hi = (n - n / 10).min(n - 2);
    let mut worst = 0.0f64;
    for k in lo..hi {
        let d1 = (-avg[k + 2] + 8.0 * avg[k + 1] - 8.0 * avg[k - 1] + avg[k - 2]) / (12.0 * dt);
        let d2 = (-avg[k + 2] + 16.0 * avg[k + 1] - 30.0 * avg[k] + 16.0 * avg[k - 1] - avg[k - 2])
            / (12.0 * dt * dt);
        let lhs = d2 + params.damping * d1 + params.mass_sq * avg[k];
        let scale = d2.abs()
            + (params.damping * d1).abs()
            + (params.mass_sq * avg[k]).abs()
            + force[k].abs();
        if scale > 0.0 {
            worst = worst.max((lhs - force[k]).abs() / scale);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_values() {
        assert_eq!(DataProfile::Bump.value(1.0, 1.0), 0.0);
        assert!((DataProfile::Bump.value(0.0, 1.0) - (-1f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn laplacian_telescopes() {
        for dim in 1..=4 {
            let grid = RadialGrid::new(dim, 0.01, 3.0).unwrap();
            let u: Vec<f64> = grid
                .points
                .iter()
                .map(|&r| (-(r * r) * 8.0).exp())
                .collect();
            let mut out = vec![0.0; u.len()];
            grid.laplacian(&u, &mut out);
            let total: f64 = out.iter().zip(&grid.volumes).map(|(l, v)| l * v).sum();
            assert!(total.abs() < 1e-10, "dim {dim}: {total}");
        }
    }

    #[test]
    fn laplacian_of_quadratic() {
        // Δ r² = 2n
        for dim in 1..=3 {
            let grid = RadialGrid::new(dim, 0.01, 1.0).unwrap();
            let u: Vec<f64> = grid.points.iter().map(|&r| r * r).collect();
            let mut out = vec![0.0; u.len()];
            grid.laplacian(&u, &mut out);
            for v in &out[..out.len() - 1] {
                assert!((v - 2.0 * dim as f64).abs() < 1e-8 * (1.0 + v.abs()), "{v}");
            }
        }
    }
}
