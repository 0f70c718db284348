use blowup_core::ode::{
    duhamel_reconstruct, integrate_comparison, integrate_with, linear_solution, v0_lower_envelope,
    DataMoments, ExitReason, OdeProblem, SolverControls, SourceCoefficient, V0Envelope,
};
use blowup_core::{ModelParams, Spacetime};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn problem(b: f64, m2: f64, q: f64, frame: f64, u0: f64, u1: f64, t_max: f64) -> OdeProblem {
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

#[test]
fn exact_cubic_blowup_time() {
    // U = 1/(1-t) solves U'' = 2U³
    let est = integrate_comparison(&problem(0.0, 0.0, 3.0, 2.0, 1.0, 1.0, 10.0)).unwrap();
    assert!(est.blew_up);
    assert_eq!(est.reason, ExitReason::ThresholdAndStepCollapse);
    let t_hat = est.t_hat.unwrap();
    assert!((t_hat - 1.0).abs() < 1e-3, "T̂ = {t_hat}");
    assert!(est.t_low <= t_hat);
    assert!((est.fit_exponent.unwrap() - 1.0).abs() < 0.05);
}

#[test]
fn exact_cubic_trajectory() {
    let times: Vec<f64> = (0..9).map(|i| 0.1 * i as f64).collect();
    let (_, samples) = integrate_with(
        &problem(0.0, 0.0, 3.0, 2.0, 1.0, 1.0, 10.0),
        &SolverControls::default(),
        &times,
    )
    .unwrap();
    assert_eq!(samples.len(), times.len());
    for s in samples {
        let exact = 1.0 / (1.0 - s.t);
        assert!(
            (s.u - exact).abs() < 1e-8 * exact,
            "t={} {} vs {exact}",
            s.t,
            s.u
        );
        assert!((s.du - exact * exact).abs() < 1e-7 * exact * exact);
    }
}

#[test]
fn unforced_matches_linear_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let times: Vec<f64> = (0..=100).map(|i| 0.05 * i as f64).collect();
    for draw in 0..100 {
        let b: f64 = rng.random_range(0.0..3.0);
        let m2 = match draw % 3 {
            0 => b * b / 4.0,
            1 => rng.random_range(0.0..0.99) * b * b / 4.0,
            _ => b * b / 4.0 + rng.random_range(0.05..4.0),
        };
        let u0: f64 = rng.random_range(0.0..2.0);
        let u1: f64 = rng.random_range(0.01..2.0);
        let p = problem(b, m2, 2.0, 0.0, u0, u1, 5.0);
        let (est, samples) = integrate_with(&p, &SolverControls::default(), &times).unwrap();
        assert!(!est.blew_up);
        for s in &samples {
            let exact = linear_solution(b, m2, u0, u1, s.t);
            assert!(
                (s.u - exact).abs() <= 1e-8,
                "b={b} m2={m2} t={}: {} vs {exact}",
                s.t,
                s.u
            );
        }
    }
}

#[test]
fn undamped_oscillator_reaches_horizon() {
    let est = integrate_comparison(&problem(0.0, 1.0, 2.0, 0.0, 1.0, 0.0, 30.0)).unwrap();
    assert!(!est.blew_up);
    assert_eq!(est.reason, ExitReason::HorizonReached);
    assert!((est.t_low - 30.0).abs() < 1e-12);
}

#[test]
fn blowup_exponent_matches_leading_balance() {
    for q in [2.0, 3.0, 4.0] {
        let est = integrate_comparison(&problem(1.0, 0.0, q, 1.0, 1.0, 1.0, 100.0)).unwrap();
        assert!(est.blew_up, "q={q}");
        let expect = 2.0 / (q - 1.0);
        let got = est.fit_exponent.unwrap();
        assert!(
            (got / expect - 1.0).abs() < 0.25,
            "q={q}: {got} vs {expect}"
        );
        assert!((got - expect).abs() <= 0.5);
    }
}

#[test]
fn blowup_time_nonincreasing_in_epsilon() {
    let params = ModelParams {
        damping: 1.0,
        ..Default::default()
    };
    let mut last = f64::INFINITY;
    for k in (2..12).rev() {
        let eps = 2f64.powi(-k);
        let p = OdeProblem::from_params(
            &ModelParams {
                epsilon: eps,
                ..params
            },
            1.0,
            1.0,
            1.0,
            1e6,
        );
        let t = integrate_comparison(&p).unwrap().t_hat.unwrap();
        assert!(t <= last, "ε={eps}: {t} after {last}");
        last = t;
    }
}

#[test]
fn duhamel_zero_forcing_is_linear() {
    let dt = 0.01;
    let forcing = vec![0.0; 501];
    for (b, m2) in [(3.0, 2.0), (2.0, 1.0), (1.0, 0.0)] {
        let u = duhamel_reconstruct(b, m2, 0.7, 0.3, dt, &forcing).unwrap();
        for (k, v) in u.iter().enumerate() {
            let exact = linear_solution(b, m2, 0.7, 0.3, k as f64 * dt);
            assert!((v - exact).abs() <= 1e-10);
        }
    }
}

#[test]
fn duhamel_constant_forcing() {
    let dt = 0.02;
    let g = 1.7;
    let forcing = vec![g; 301];
    let u = duhamel_reconstruct(0.0, 0.0, 0.5, 0.25, dt, &forcing).unwrap();
    for (k, v) in u.iter().enumerate() {
        let t = k as f64 * dt;
        let exact = 0.5 + 0.25 * t + g * t * t / 2.0;
        assert!(
            (v - exact).abs() < 1e-12 * exact.max(1.0),
            "k={k}: {v} vs {exact}"
        );
    }
}

#[test]
fn duhamel_reproduces_forced_ode() {
    // forcing sampled from the comparison ODE itself must give back its solution
    let p = OdeProblem {
        source: SourceCoefficient {
            amplitude: 0.8,
            growth_rate: 0.2,
            poly_exponent: 0.5,
        },
        ..problem(3.0, 2.0, 2.0, 1.0, 0.4, 0.2, 3.0)
    };
    let dt = 1e-3;
    let times: Vec<f64> = (0..=3000).map(|i| i as f64 * dt).collect();
    let (_, samples) = integrate_with(&p, &SolverControls::default(), &times).unwrap();
    let forcing: Vec<f64> = samples
        .iter()
        .map(|s| p.frame * p.source.log_value(s.t).exp() * s.u.abs().powf(p.power))
        .collect();
    let u = duhamel_reconstruct(3.0, 2.0, 0.4, 0.2, dt, &forcing).unwrap();
    for (s, v) in samples.iter().zip(&u) {
        assert!(
            (s.u - v).abs() <= 1e-10 * s.u.abs().max(1e-3),
            "t={}: {} vs {v}",
            s.t,
            s.u
        );
    }
}

#[test]
fn duhamel_rejects_short_series() {
    assert!(duhamel_reconstruct(1.0, 0.0, 1.0, 0.0, 0.1, &[0.0; 5]).is_err());
    assert!(duhamel_reconstruct(0.0, 1.0, 1.0, 0.0, 0.1, &[0.0; 20]).is_err());
}

fn ads(b: f64, m2: f64) -> ModelParams {
    ModelParams {
        spacetime: Spacetime::AntiDeSitter,
        damping: b,
        mass_sq: m2,
        hubble: 0.5,
        speed: 1.0,
        epsilon: 0.1,
        dim: 2,
        ..Default::default()
    }
}

#[test]
fn v0_envelope_starts_at_initial_value() {
    let params = ads(3.0, 2.0);
    let moments = DataMoments {
        v0_phi: 1.3,
        v1_phi: 0.4,
    };
    let env = V0Envelope::new(&params, moments).unwrap();
    let at0 = env.at(0.0).unwrap();
    let lambda0 = blowup_core::specfun::profiles::TimeProfile::new(&params)
        .unwrap()
        .value(0.0)
        .unwrap();
    assert!((at0.initial - params.epsilon * lambda0 * moments.v0_phi).abs() < 1e-14);
    assert_eq!(at0.integral, 0.0);
    assert!(env.data_integral > 0.0);
}

#[test]
fn v0_envelope_scales_like_decaying_exponential() {
    let params = ads(3.0, 2.0);
    let moments = DataMoments {
        v0_phi: 1.0,
        v1_phi: 1.0,
    };
    let env = V0Envelope::new(&params, moments).unwrap();
    let scaled: Vec<f64> = [8.0, 10.0, 12.0]
        .iter()
        .map(|&t| env.at(t).unwrap().value * (params.hubble * t).exp() / params.epsilon)
        .collect();
    assert!(scaled.iter().all(|&s| s > 0.0));
    assert!((scaled[2] / scaled[1] - 1.0).abs() < 1e-6, "{scaled:?}");
}

#[test]
fn v0_envelope_needs_contracting_background() {
    let params = ModelParams::default();
    assert!(v0_lower_envelope(
        1.0,
        &params,
        DataMoments {
            v0_phi: 1.0,
            v1_phi: 1.0
        }
    )
    .is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn v0_envelope_is_continuous(t in 0.0f64..5.0, b in 1.0f64..3.0) {
        let params = ads(b, 0.2 * b * b);
        let env = V0Envelope::new(&params, DataMoments { v0_phi: 0.5, v1_phi: 0.5 }).unwrap();
        let a = env.at(t).unwrap().value;
        let c = env.at(t + 1e-7).unwrap().value;
        prop_assert!((a - c).abs() <= 1e-5 * a.abs().max(1e-300));
        prop_assert!(a > 0.0);
    }
}
