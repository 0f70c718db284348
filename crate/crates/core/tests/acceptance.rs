//! Acceptance suite: one line per criterion, `PASS`/`FAIL`, with timing.
//!
//! Runs without the libtest harness so every line is printed on success too.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use blowup_core::fit::{fit_log_lifespan, FitOptions, Law};
use blowup_core::iteration::{iterate, IterationTrace, Variant};
use blowup_core::ode::{
    duhamel_reconstruct, integrate_comparison, integrate_with, linear_solution, OdeProblem,
    SolverControls, SourceCoefficient,
};
use blowup_core::pde::{
    ode_consistency_residual, run_until_blowup, DataProfile, PdeControls, PdeRun, Solver, WaveSpeed,
};
use blowup_core::regimes::{
    classify, contracting_critical_rate, critical_rates, damping_roots, dimension_thresholds,
    weighted_critical_rate,
};
use blowup_core::specfun::{bessel_k, log_phi, wronskian_residual, TimeProfile};
use blowup_core::sweep::{
    fit_sweep, is_monotone, run_sweep, write_sweep, Engine, SweepPlan, SweepRecord, SWEEP_CSV,
    SWEEP_META, SWEEP_NDJSON,
};
use blowup_core::{Error, ModelParams, Spacetime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}

fn ds(b: f64, m2: f64) -> ModelParams {
    ModelParams {
        damping: b,
        mass_sq: m2,
        ..Default::default()
    }
}

fn ads(dim: u32, hubble: f64, b: f64, m2: f64) -> ModelParams {
    ModelParams {
        spacetime: Spacetime::AntiDeSitter,
        dim,
        hubble,
        damping: b,
        mass_sq: m2,
        ..Default::default()
    }
}

// ---------------------------------------------------------------- 1

/// Slow root written out directly; the cases avoid cancellation.
fn slow_root(b: f64, m2: f64) -> f64 {
    (b - (b * b - 4.0 * m2).max(0.0).sqrt()) / 2.0
}

/// Positive root of the p₀ quadratic by bisection on its expanded form.
fn p0_oracle(n: f64, h: f64, b: f64, beta: f64) -> f64 {
    let f = |p: f64| {
        let x = p - 1.0;
        (b + n * h) * (beta + 1.0) * x * x
            + (2.0 * (b + h) * beta + b + n * h + h) * x
            + (b - (n - 2.0) * h) * beta
    };
    let (mut lo, mut hi) = (1.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn thresholds() -> Outcome {
    let mut cases: Vec<(String, f64, f64)> = Vec::new();
    let mut push = |name: &str, got: f64, want: f64| cases.push((name.to_string(), got, want));
    let rc = |b, m2, beta, p| critical_rates(b, m2, beta, p).unwrap();

    for &(b, m2, beta, p) in &[
        (3.0, 2.0, 0.0, 2.0),
        (3.0, 2.0, 0.0, 3.0),
        (5.0, 4.0, 1.0, 1.5),
        (4.0, 3.0, 0.5, 2.0),
        (2.5, 1.0, 0.0, 2.0),
        (2.0, 1.0, 0.0, 2.0),
        (2.0, 1.0, 1.0, 2.0),
    ] {
        let q = (beta + 1.0) * p;
        push(
            &format!("r_crit b={b} m2={m2} beta={beta} p={p}"),
            rc(b, m2, beta, p).rate,
            slow_root(b, m2) * (q - 1.0),
        );
    }
    // massless collapse
    push("r_crit massless b=1", rc(1.0, 0.0, 0.0, 2.0).rate, 0.0);
    push("r_crit massless b=0", rc(0.0, 0.0, 0.0, 2.0).rate, 0.0);
    push(
        "r_crit via classify, massless",
        classify(&ds(1.0, 0.0)).unwrap().critical_rate.unwrap(),
        0.0,
    );
    push("kappa_crit dominant", rc(3.0, 2.0, 0.0, 2.0).poly, -1.0);
    push(
        "kappa_crit dominant beta",
        rc(4.0, 3.0, 0.5, 2.0).poly,
        -1.0,
    );
    push("kappa_crit balanced q=3", rc(4.0, 4.0, 0.0, 3.0).poly, -4.0);
    push("kappa_crit balanced q=4", rc(2.0, 1.0, 1.0, 2.0).poly, -5.0);

    // (n, H, b, m², β, p, expected ϱ_crit)
    for &(n, h, b, m2, beta, p, want) in &[
        (1u32, 1.0, 3.0, 2.0, 0.0, 2.0, 2.0),
        (3, 1.0, 0.0, 0.0, 0.0, 2.0, 2.0),
        (2, 1.0, 1.0, 0.0, 0.0, 3.0, 11.0 / 3.0),
        (1, 2.0, 2.0, 0.0, 1.0, 2.0, 4.0),
        (4, 0.5, 2.0, 0.75, 0.0, 2.0, 2.25),
    ] {
        let (got, branch) = contracting_critical_rate(n, h, b, m2, beta, p).unwrap();
        push(
            &format!("rho_crit n={n} H={h} b={b} ({branch:?})"),
            got,
            want,
        );
    }

    let dt = |n, h, b, m2, beta| dimension_thresholds(n, h, b, m2, beta).unwrap();
    push(
        "N0 b=3 m2=2 H=1",
        dt(2, 1.0, 3.0, 2.0, 0.0).critical_dim,
        1.0,
    );
    push(
        "N0 b=5 m2=0 H=2",
        dt(2, 2.0, 5.0, 0.0, 0.0).critical_dim,
        2.5,
    );
    push("N0 balanced", dt(2, 1.0, 2.0, 1.0, 0.0).critical_dim, 0.0);
    push(
        "p_tilde n=2 H=1",
        dt(2, 1.0, 3.0, 2.0, 0.0).branch_power.unwrap(),
        2.0,
    );
    push(
        "p_tilde n=2 H=2",
        dt(2, 2.0, 3.0, 2.0, 0.0).branch_power.unwrap(),
        4.0 / 3.0,
    );
    push(
        "p_tilde n=1",
        dt(1, 1.0, 0.6, 0.05, 0.0).branch_power.unwrap(),
        10.0 / 3.0,
    );
    push(
        "p_tilde absent n=3 b=0",
        dt(3, 1.0, 0.0, 0.0, 0.0)
            .branch_power
            .map_or(0.0, |_| f64::NAN),
        0.0,
    );
    let p0 = dt(4, 1.0, 0.0, 0.0, 1.0).nonpositive_power.unwrap();
    push("p0 n=4 H=1 b=0 beta=1", p0, p0_oracle(4.0, 1.0, 0.0, 1.0));
    push(
        "p0 n=4 closed form",
        p0,
        1.0 + (-7.0 + 113f64.sqrt()) / 16.0,
    );
    push(
        "p0 n=5 H=1 b=1 beta=0.5",
        dt(5, 1.0, 1.0, 0.0, 0.5).nonpositive_power.unwrap(),
        p0_oracle(5.0, 1.0, 1.0, 0.5),
    );
    push(
        "p0 n=3 H=1 b=0 beta=1",
        dt(3, 1.0, 0.0, 0.0, 1.0).nonpositive_power.unwrap(),
        p0_oracle(3.0, 1.0, 0.0, 1.0),
    );

    let worst = cases
        .iter()
        .map(|(name, got, want)| (name, rel(*got, *want)))
        .fold((None, 0.0f64), |acc, (name, e)| {
            if e.is_nan() || e > acc.1 {
                (
                    Some(name.clone()),
                    if e.is_nan() { f64::INFINITY } else { e },
                )
            } else {
                acc
            }
        });
    check(
        cases.len() == 30 && worst.1 <= 1e-12,
        format!(
            "{} cases, worst rel {:.1e}{}",
            cases.len(),
            worst.1,
            worst.0.map(|n| format!(" ({n})")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------------- 2

fn draw(variant: Variant, u: [f64; 6]) -> ModelParams {
    let b = 0.5 + 2.5 * u[0];
    let p = 1.3 + 2.0 * u[1];
    let beta = if u[5] < 0.5 { 0.0 } else { u[5] };
    let mut params = ModelParams {
        damping: b,
        power: p,
        nonlocal_power: beta,
        poly_exponent: -1.5 + 3.5 * u[2],
        epsilon: 1e-3,
        amplitude: 0.5 + 2.0 * u[4],
        ..Default::default()
    };
    let q = params.effective_power();
    let dominant_m2 = 0.24 * b * b * u[3];
    match variant {
        Variant::Exponential2Step => {
            params.mass_sq = if u[3] < 0.3 { b * b / 4.0 } else { dominant_m2 };
            params.growth_rate =
                damping_roots(b, params.mass_sq).slow * (q - 1.0) + 0.1 + 2.0 * u[4];
        }
        Variant::PolynomialDominant | Variant::LogDominant => {
            params.mass_sq = dominant_m2;
            params.growth_rate = damping_roots(b, params.mass_sq).slow * (q - 1.0);
        }
        Variant::LogBalanced => {
            params.mass_sq = b * b / 4.0;
            params.growth_rate = b / 2.0 * (q - 1.0);
        }
        Variant::AntiDsExponential => {
            params.spacetime = Spacetime::AntiDeSitter;
            params.dim = 1 + (u[3] * 3.0) as u32;
            params.hubble = 0.2 + 0.8 * u[0];
            params.mass_sq = dominant_m2;
            params.growth_rate =
                weighted_critical_rate(params.dim, params.hubble, b, beta, p) + 0.1 + 2.0 * u[4];
        }
    }
    params
}

/// Worst closed-form and limit errors of one trace.
fn trace_errors(trace: &IterationTrace) -> (f64, f64) {
    let mut closed = 0.0f64;
    for ((_, rec), (_, cf)) in trace
        .exponents
        .named()
        .into_iter()
        .zip(trace.closed.named())
    {
        for (x, y) in rec.iter().zip(cf) {
            let scale = x.abs().max(y.abs()).max(1.0);
            closed = closed.max((x - y).abs() / scale);
        }
    }
    let limit =
        (trace.floor_limit - trace.analytic_limit).abs() / trace.analytic_limit.abs().max(1.0);
    (closed, limit)
}

fn iteration_engine() -> Outcome {
    let variants = [
        Variant::Exponential2Step,
        Variant::PolynomialDominant,
        Variant::LogDominant,
        Variant::LogBalanced,
        Variant::AntiDsExponential,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut closed, mut limit) = (0.0f64, 0.0f64);
    let mut runs = 0;
    for v in variants {
        for _ in 0..50 {
            let u: [f64; 6] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
            let trace = iterate(v, &draw(v, u), 30).map_err(|e| format!("{v}: {e}"))?;
            let (c, l) = trace_errors(&trace);
            closed = closed.max(c);
            limit = limit.max(l);
            runs += 1;
        }
    }
    check(
        closed <= 1e-12 && limit <= 1e-9,
        format!("{runs} traces, closed-form rel {closed:.1e}, limit rel {limit:.1e}"),
    )
}

// ---------------------------------------------------------------- 3

fn ode_problem(b: f64, m2: f64, q: f64, frame: f64, u0: f64, u1: f64, t_max: f64) -> OdeProblem {
    OdeProblem {
        damping: b,
        mass_sq: m2,
        power: q,
        frame,
        source: SourceCoefficient::UNIT,
        u0,
        u1,
        t_max,
    }
}

fn exact_oracle() -> Outcome {
    let est = integrate_comparison(&ode_problem(0.0, 0.0, 3.0, 2.0, 1.0, 1.0, 10.0))
        .map_err(|e| e.to_string())?;
    let t_hat = est.t_hat.unwrap_or(f64::NAN);
    check(
        est.blew_up && (t_hat - 1.0).abs() <= 1e-3,
        format!("T_hat = {t_hat:.6}, error {:.1e}", (t_hat - 1.0).abs()),
    )
}

// ---------------------------------------------------------------- 4

fn linear_dynamics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let times: Vec<f64> = (0..=200).map(|i| 0.025 * i as f64).collect();
    let mut worst = 0.0f64;
    for draw in 0..100 {
        let b: f64 = rng.random_range(0.0..3.0);
        let m2 = match draw % 3 {
            0 => b * b / 4.0,
            1 => rng.random_range(0.0..0.99) * b * b / 4.0,
            _ => b * b / 4.0 + rng.random_range(0.05..4.0),
        };
        let u0: f64 = rng.random_range(0.0..2.0);
        let u1: f64 = rng.random_range(0.01..2.0);
        let p = ode_problem(b, m2, 2.0, 0.0, u0, u1, 5.0);
        let (_, samples) =
            integrate_with(&p, &SolverControls::default(), &times).map_err(|e| e.to_string())?;
        for s in &samples {
            worst = worst.max((s.u - linear_solution(b, m2, u0, u1, s.t)).abs());
        }
    }
    check(
        worst <= 1e-8,
        format!("100 draws, max error {worst:.1e} on [0,5]"),
    )
}

// ---------------------------------------------------------------- 5, 6, 10

struct SweepSummary {
    records: Vec<SweepRecord>,
    fitted: f64,
}

fn sweep(base: ModelParams) -> Result<(SweepSummary, String, bool), String> {
    let plan = SweepPlan::new(base, Engine::ComparisonOde);
    let outcome = run_sweep(&plan).map_err(|e| e.to_string())?;
    if let Some(f) = &outcome.failure {
        return Err(format!("run failed at eps={}: {}", f.epsilon, f.message));
    }
    let (_, verdict) = fit_sweep(&plan, &outcome.records).map_err(|e| e.to_string())?;
    let line = format!(
        "theory {:.3}, fitted {:.3} ± {:.3}, r² {:.4}",
        verdict.theory_exponent, verdict.fitted_exponent, verdict.tolerance, verdict.r_squared
    );
    Ok((
        SweepSummary {
            records: outcome.records,
            fitted: verdict.fitted_exponent,
        },
        line,
        verdict.pass && verdict.r_squared >= 0.98,
    ))
}

fn polynomial_regime(store: &mut Vec<SweepSummary>) -> Outcome {
    let (damped, l1, ok1) = sweep(ds(1.0, 0.0))?;
    let (undamped, l0, ok0) = sweep(ds(0.0, 0.0))?;
    store.push(damped);
    store.push(undamped);
    check(ok1 && ok0, format!("b=1: {l1}; b=0: {l0}"))
}

fn log_params() -> ModelParams {
    ModelParams {
        damping: 3.0,
        mass_sq: 2.0,
        growth_rate: 1.0,
        poly_exponent: -1.0,
        amplitude: 455.0,
        ..Default::default()
    }
}

fn logarithmic_regime(store: &mut Vec<SweepSummary>) -> Outcome {
    let base = log_params();
    let (summary, line, ok) = sweep(base)?;
    let plan = SweepPlan::new(base, Engine::ComparisonOde);
    let variant = Variant::select(&base).map_err(|e| e.to_string())?;
    let mut onsets = Vec::new();
    for &eps in &plan.epsilons {
        let params = ModelParams {
            epsilon: eps,
            ..base
        };
        let trace = iterate(variant, &params, 12).map_err(|e| e.to_string())?;
        match trace.divergence_onset() {
            Ok(o) => onsets.push((eps, o.log_time)),
            Err(Error::OutOfAsymptoticRange(_)) => {}
            Err(e) => return Err(e.to_string()),
        }
    }
    let onset_fit = fit_log_lifespan(&onsets, Law::ExpLaw, &FitOptions::default())
        .map_err(|e| e.to_string())?;
    let theory = -(base.effective_power() - 1.0);
    let tol = 0.25 * theory.abs();
    let onset_ok = (onset_fit.fitted_exponent - theory).abs() <= tol
        && (onset_fit.fitted_exponent - summary.fitted).abs() <= tol;
    let detail = format!(
        "ODE {line}; onset exponent {:.3} over {} points",
        onset_fit.fitted_exponent,
        onsets.len()
    );
    store.push(summary);
    check(ok && onset_ok, detail)
}

fn same_bytes(a: &Path, b: &Path, names: &[&str]) -> std::io::Result<bool> {
    for name in names {
        if fs::read(a.join(name))? != fs::read(b.join(name))? {
            return Ok(false);
        }
    }
    Ok(true)
}

fn monotone_and_deterministic(store: &[SweepSummary]) -> Outcome {
    let monotone = store.iter().all(|s| is_monotone(&s.records));
    let mut dirs = Vec::new();
    // the meta file records the worker count, so only the data is compared across counts
    for workers in [0usize, 0, 1] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut plan = SweepPlan::new(ds(1.0, 0.0), Engine::ComparisonOde);
        plan.workers = workers;
        let outcome = run_sweep(&plan).map_err(|e| e.to_string())?;
        write_sweep(dir.path(), &plan, &outcome).map_err(|e| e.to_string())?;
        dirs.push(dir);
    }
    let io = |r: std::io::Result<bool>| r.map_err(|e| e.to_string());
    let repeat = io(same_bytes(
        dirs[0].path(),
        dirs[1].path(),
        &[SWEEP_CSV, SWEEP_NDJSON, SWEEP_META],
    ))?;
    let workers = io(same_bytes(
        dirs[0].path(),
        dirs[2].path(),
        &[SWEEP_CSV, SWEEP_NDJSON],
    ))?;
    check(
        monotone && repeat && workers && store.len() == 3,
        format!(
            "{} sweeps monotone: {monotone}; repeat byte-identical: {repeat}; data independent of workers: {workers}",
            store.len()
        ),
    )
}

// ---------------------------------------------------------------- 7

fn phi_eigen_residual(n: u32, rho: f64) -> f64 {
    let h = 1e-3;
    let f = |r: f64| (log_phi(n, r).unwrap() - log_phi(n, rho).unwrap()).exp();
    let d1 = (45.0 * (f(rho + h) - f(rho - h)) - 9.0 * (f(rho + 2.0 * h) - f(rho - 2.0 * h))
        + (f(rho + 3.0 * h) - f(rho - 3.0 * h)))
        / (60.0 * h);
    let d2 = (270.0 * (f(rho + h) + f(rho - h)) - 27.0 * (f(rho + 2.0 * h) + f(rho - 2.0 * h))
        + 2.0 * (f(rho + 3.0 * h) + f(rho - 3.0 * h))
        - 490.0)
        / (180.0 * h * h);
    (d2 + (n as f64 - 1.0) / rho * d1 - 1.0).abs()
}

fn special_functions() -> Outcome {
    let mut wronskian = 0.0f64;
    for i in 0..20 {
        let nu = 10.0 * i as f64 / 19.0;
        for j in 0..20 {
            let z = 1e-3 * (3e4f64).powf(j as f64 / 19.0);
            let w = wronskian_residual(nu, z).map_err(|e| e.to_string())?;
            wronskian = wronskian.max(w.abs() * z);
        }
    }
    let k = bessel_k(0.5, 1.0).map_err(|e| e.to_string())?;
    let k_err = rel(k, (PI / 2.0).sqrt() * (-1f64).exp());
    let mut phi_res = 0.0f64;
    for n in [1u32, 2, 3, 5] {
        for rho in [0.5, 1.0, 3.0, 10.0, 40.0] {
            phi_res = phi_res.max(phi_eigen_residual(n, rho));
        }
    }
    let mut lambda_res = 0.0f64;
    for (b, m2, c, h) in [
        (0.0, 0.0, 1.0, 1.0),
        (3.0, 2.0, 0.5, 1.0),
        (2.0, 1.0, 2.0, 0.7),
    ] {
        let params = ModelParams {
            speed: c,
            ..ads(1, h, b, m2)
        };
        let prof = TimeProfile::new(&params).map_err(|e| e.to_string())?;
        for i in 0..=30 {
            let t = 3.0 * i as f64 / 30.0;
            lambda_res = lambda_res.max(prof.ode_residual(t).map_err(|e| e.to_string())?);
        }
    }
    check(
        wronskian <= 1e-8 && k_err <= 1e-10 && phi_res <= 1e-6 && lambda_res <= 1e-6,
        format!(
            "Wronskian {wronskian:.1e}, K_1/2(1) rel {k_err:.1e}, Phi {phi_res:.1e}, lambda {lambda_res:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- 8, 9

fn duhamel_error(run: &PdeRun) -> f64 {
    let (times, avg, force) = run.forcing_series();
    let dt = times[1] - times[0];
    let p = &run.params;
    // u₁ = u₀ at the default velocity scale
    let Ok(rebuilt) = duhamel_reconstruct(p.damping, p.mass_sq, avg[0], avg[0], dt, &force) else {
        return f64::INFINITY;
    };
    let cut = 0.9 * run.blowup.t_low;
    times
        .iter()
        .zip(avg.iter().zip(&rebuilt))
        .filter(|(t, _)| **t <= cut)
        .map(|(_, (a, r))| (a - r).abs() / a.abs())
        .fold(0.0, f64::max)
}

fn dalembert_error(h: f64) -> Result<f64, String> {
    let params = ModelParams {
        damping: 0.0,
        mass_sq: 0.0,
        epsilon: 1.0,
        ..Default::default()
    };
    let controls = PdeControls {
        h,
        horizon: 1.5,
        velocity_scale: 0.0,
        source_enabled: false,
        ..Default::default()
    };
    let mut solver = Solver::with_speed(&params, WaveSpeed::Constant { speed: 1.0 }, &controls)
        .map_err(|e| e.to_string())?;
    let mut state = solver.initial_state().map_err(|e| e.to_string())?;
    while state.t < 1.5 - 1e-12 {
        solver.step(&mut state).map_err(|e| e.to_string())?;
    }
    let f = |x: f64| DataProfile::Bump.value(x.abs(), 1.0);
    let t = state.t;
    let err: f64 = solver
        .grid
        .points
        .iter()
        .zip(&state.u)
        .map(|(&r, &u)| (u - 0.5 * (f(r - t) + f(r + t))).powi(2))
        .sum();
    Ok((err * h).sqrt())
}

fn contracting_params() -> ModelParams {
    ModelParams {
        growth_rate: 3.0,
        amplitude: 5.0,
        epsilon: 1.0,
        ..ads(2, 1.0, 1.0, 0.0)
    }
}

fn pde_structure() -> Outcome {
    let errs: Vec<f64> = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0]
        .iter()
        .map(|&h| dalembert_error(h))
        .collect::<Result<_, _>>()?;
    let order = errs
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .fold(f64::INFINITY, f64::min);

    let nonlinear = [
        (
            "dS",
            ModelParams {
                epsilon: 0.5,
                ..ds(1.0, 0.0)
            },
            PdeControls::default(),
        ),
        (
            "anti-dS",
            contracting_params(),
            PdeControls {
                horizon: 3.0,
                ..Default::default()
            },
        ),
    ];
    let mut leakage = 0.0f64;
    let mut residual = 0.0f64;
    let mut duhamel = 0.0f64;
    let mut blowups = Vec::new();
    for (name, params, controls) in nonlinear {
        let run = run_until_blowup(&params, &controls).map_err(|e| format!("{name}: {e}"))?;
        leakage = leakage.max(run.max_leakage);
        residual = residual.max(ode_consistency_residual(&run).map_err(|e| e.to_string())?);
        duhamel = duhamel.max(duhamel_error(&run));
        blowups.push(run.blowup.blew_up);
    }
    let quiet = run_until_blowup(
        &ModelParams {
            epsilon: 0.01,
            ..ds(2.0, 1.0)
        },
        &PdeControls::default(),
    )
    .map_err(|e| e.to_string())?;
    leakage = leakage.max(quiet.max_leakage);
    check(
        order >= 1.8
            && leakage <= 1e-8
            && residual <= 1e-2
            && duhamel <= 1e-3
            && blowups.iter().all(|&b| b),
        format!(
            "order {order:.2}, leakage {leakage:.1e} (3 runs), residual {residual:.1e}, Duhamel {duhamel:.1e}"
        ),
    )
}

fn weighted_bound() -> Outcome {
    let params = contracting_params();
    let controls = PdeControls {
        horizon: 3.0,
        ..Default::default()
    };
    let run = run_until_blowup(&params, &controls).map_err(|e| e.to_string())?;
    let end = run.blowup.t_hat.unwrap_or(3.0).min(3.0);
    let floor = run
        .samples
        .iter()
        .filter(|s| s.t <= end)
        .filter_map(|s| {
            s.weighted
                .map(|w| w * (params.hubble * s.t).exp() / params.epsilon)
        })
        .fold(f64::INFINITY, f64::min);
    check(
        floor.is_finite() && floor > 0.0,
        format!("min V0 e^(Ht)/eps = {floor:.3} on [0, {end:.3}]"),
    )
}

// ----------------------------------------------------------------

fn main() {
    let mut sweeps = Vec::new();
    let mut failures = 0;
    let mut run = |id: u32, name: &str, budget: Duration, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) => (elapsed <= budget, d),
            Err(d) => (false, d),
        };
        if !ok {
            failures += 1;
        }
        println!(
            "[{}] {id:>2} {name}: {detail} ({:.2}s, budget {}s)",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    };
    let secs = Duration::from_secs;
    run(1, "threshold formulas", secs(1), &mut thresholds);
    run(2, "iteration engine", secs(5), &mut iteration_engine);
    run(3, "exact blow-up oracle", secs(1), &mut exact_oracle);
    run(4, "linear dynamics", secs(5), &mut linear_dynamics);
    run(5, "polynomial lifespan scaling", secs(60), &mut || {
        polynomial_regime(&mut sweeps)
    });
    run(6, "logarithmic lifespan scaling", secs(120), &mut || {
        logarithmic_regime(&mut sweeps)
    });
    run(7, "special functions", secs(10), &mut special_functions);
    run(8, "PDE structural checks", secs(300), &mut pde_structure);
    run(9, "anti-dS weighted bound", secs(120), &mut weighted_bound);
    run(10, "monotonicity and determinism", secs(60), &mut || {
        monotone_and_deterministic(&sweeps)
    });
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
