use std::fs;
use std::io::Write;
use std::path::Path;

use blowup_core::iteration::{iterate, Variant};
use blowup_core::ode::{integrate_comparison, integrate_with, ExitReason, OdeProblem};
use blowup_core::params::holder_frame_constant;
use blowup_core::pde::{ode_consistency_residual, run_until_blowup};
use blowup_core::regimes::{
    classify, lifespan_bound, ContractingBranch, Dissipation, Growth, RegimeReport,
};
use blowup_core::specfun::bessel_k;
use blowup_core::sweep::{
    fit_sweep, is_monotone, read_sweep, run_sweep, write_plot_data, write_sweep, write_verdicts,
};
use blowup_core::{ModelParams, Spacetime};
use serde_json::json;

use crate::config::RunConfig;
use crate::exit::CliError;

fn dissipation_name(d: Dissipation) -> &'static str {
    match d {
        Dissipation::DominantDamping => "dominantDissipation",
        Dissipation::Balanced => "balanced",
        Dissipation::DominantMass => "dominantMass",
    }
}

fn growth_name(g: Growth) -> &'static str {
    match g {
        Growth::Exponential => "exponential",
        Growth::Polynomial => "polynomial",
        Growth::Logarithmic => "logarithmic",
        Growth::BelowThreshold => "belowThreshold",
    }
}

fn branch_name(b: ContractingBranch) -> &'static str {
    match b {
        ContractingBranch::AverageDominant => "averageDominant",
        ContractingBranch::WeightedDominant => "v0Dominant",
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

/// Headline and detail lines for a regime report.
pub fn render_classification(params: &ModelParams, report: &RegimeReport) -> Vec<String> {
    let mut lines = Vec::new();
    if report.dissipation == Dissipation::DominantMass {
        lines.push("dominantMass: blow-up machinery not applicable".to_string());
        return lines;
    }
    let mut head = format!(
        "{} / {}",
        dissipation_name(report.dissipation),
        growth_name(report.growth)
    );
    if let Some(r) = report.critical_rate {
        head.push_str(&format!("; r_crit={r}"));
    }
    lines.push(head);
    lines.push(format!("kappa_crit={}", opt(report.critical_poly)));
    if params.spacetime == Spacetime::AntiDeSitter {
        if let (Some(rho), Some(branch)) = (report.contracting_critical_rate, report.branch) {
            lines.push(format!("branch {}, rho_crit={rho}", branch_name(branch)));
        }
        if let Some(d) = &report.dimensions {
            lines.push(format!(
                "N0={}, p_tilde={}, p0={}",
                d.critical_dim,
                opt(d.branch_power),
                opt(d.nonpositive_power)
            ));
        }
    }
    match lifespan_bound(params) {
        Ok(b) => lines.push(format!(
            "lifespan bound: {:?}, epsilon exponent {}, aux exponent {}",
            b.family, b.epsilon_exponent, b.aux_exponent
        )),
        Err(e) => lines.push(format!("lifespan bound: none ({e})")),
    }
    for n in &report.notes {
        lines.push(format!("note: {n}"));
    }
    lines
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

pub fn cmd_classify(cfg: &RunConfig, as_json: bool) -> Result<(), CliError> {
    let report = classify(&cfg.model)?;
    let lines = render_classification(&cfg.model, &report);
    let record = json!({
        "summary": lines[0],
        "report": report,
        "lifespan_bound": lifespan_bound(&cfg.model).ok(),
    });
    write_json(&cfg.output, "classify.json", &record)?;
    if as_json {
        println!("{}", serde_json::to_string(&record)?);
    } else {
        for l in lines {
            println!("{l}");
        }
    }
    Ok(())
}

pub fn cmd_iterate(cfg: &RunConfig, j_max: Option<usize>, as_json: bool) -> Result<(), CliError> {
    let variant = match &cfg.iterate.variant {
        Some(name) => name.parse::<Variant>()?,
        None => Variant::select(&cfg.model)?,
    };
    let j_max = j_max.unwrap_or(cfg.iterate.j_max);
    let trace = iterate(variant, &cfg.model, j_max)?;
    let named = trace.exponents.named();
    let closed = trace.closed.named();
    fs::create_dir_all(&cfg.output)?;
    let mut csv = csv::Writer::from_path(cfg.output.join("iterate.csv"))?;
    let mut header = vec!["j".to_string(), "L_j".to_string()];
    header.extend(named.iter().map(|(n, _)| n.to_string()));
    header.extend(["ln_C", "ln_C_floor", "closed_delta"].map(String::from));
    csv.write_record(&header)?;
    if !as_json {
        println!(
            "variant {variant}, q = {}, epsilon = {}",
            trace.q, trace.epsilon
        );
        println!("{}", header.join("\t"));
    }
    for j in 0..=j_max {
        let idx = if variant.is_two_step() { 2 * j } else { j };
        let l_j = trace.slicing.partial.get(idx).copied().unwrap_or(f64::NAN);
        let mut delta = 0.0f64;
        for ((_, rec), (_, cl)) in named.iter().zip(&closed) {
            let (x, y) = (rec[j], cl[j]);
            delta = delta.max((x - y).abs() / x.abs().max(y.abs()).max(1.0));
        }
        let floor = trace.log_c_floor[j];
        let fc = trace.floor_closed_form(j);
        delta = delta.max((floor - fc).abs() / floor.abs().max(fc.abs()).max(1.0));
        let mut row = vec![j.to_string(), l_j.to_string()];
        // + 0.0 turns a -0 into 0 for display
        row.extend(named.iter().map(|(_, s)| (s[j] + 0.0).to_string()));
        row.extend([
            trace.log_c[j].to_string(),
            floor.to_string(),
            format!("{delta:e}"),
        ]);
        csv.write_record(&row)?;
        if as_json {
            let mut rec = serde_json::Map::new();
            rec.insert("j".into(), json!(j));
            rec.insert("L_j".into(), json!(l_j));
            for (n, s) in &named {
                rec.insert(n.to_string(), json!(s[j]));
            }
            rec.insert("ln_C".into(), json!(trace.log_c[j]));
            rec.insert("ln_C_floor".into(), json!(floor));
            rec.insert("closed_delta".into(), json!(delta));
            println!("{}", serde_json::Value::Object(rec));
        } else {
            println!("{}", row.join("\t"));
        }
    }
    csv.flush()?;
    let onset = trace.divergence_onset();
    let summary = json!({
        "variant": variant,
        "start_index": trace.start_index,
        "floor_limit": trace.floor_limit,
        "analytic_limit": trace.analytic_limit,
        "exact_limit": trace.exact_limit,
        "onset_log_time": onset.as_ref().ok().map(|o| o.log_time),
        "onset_time": onset.as_ref().ok().map(|o| o.time),
        "onset_error": onset.as_ref().err().map(|e| e.to_string()),
    });
    write_json(&cfg.output, "iterate_meta.json", &summary)?;
    if as_json {
        println!("{summary}");
    } else {
        println!("start index {}", trace.start_index);
        println!(
            "limit: floor {} analytic {} exact {}",
            trace.floor_limit, trace.analytic_limit, trace.exact_limit
        );
        match onset {
            Ok(o) => println!("divergence onset: ln T = {}, T = {}", o.log_time, o.time),
            Err(e) => println!("divergence onset: unavailable ({e})"),
        }
    }
    Ok(())
}

fn run_ode(cfg: &RunConfig, as_json: bool) -> Result<(), CliError> {
    let frame = cfg
        .ode
        .frame
        .unwrap_or_else(|| holder_frame_constant(&cfg.model));
    let problem = OdeProblem::from_params(&cfg.model, frame, cfg.ode.u0, cfg.ode.u1, cfg.ode.t_max);
    let est = integrate_comparison(&problem)?;
    let end = if est.blew_up {
        est.t_low
    } else {
        cfg.ode.t_max
    };
    let n = 400;
    let times: Vec<f64> = (0..=n).map(|k| end * k as f64 / n as f64).collect();
    let (_, samples) = integrate_with(&problem, &cfg.ode_solver, &times)?;
    fs::create_dir_all(&cfg.output)?;
    let mut csv = csv::Writer::from_path(cfg.output.join("trace.csv"))?;
    csv.write_record(["t", "U", "dU"])?;
    for s in &samples {
        csv.write_record([s.t.to_string(), s.u.to_string(), s.du.to_string()])?;
    }
    csv.flush()?;
    let meta = json!({"engine": "ode", "frame": frame, "estimate": est, "config": cfg});
    write_json(&cfg.output, "run_meta.json", &meta)?;
    report_estimate(&meta, &est, as_json)
}

fn report_estimate(
    meta: &serde_json::Value,
    est: &blowup_core::ode::BlowupEstimate,
    as_json: bool,
) -> Result<(), CliError> {
    if as_json {
        println!("{}", serde_json::to_string(&meta["estimate"])?);
    } else if est.blew_up {
        println!(
            "T_hat ≈ {:.3} (reached t = {}, steps {}, exponent {})",
            est.t_hat.unwrap_or(est.t_low),
            est.t_low,
            est.steps,
            opt(est.fit_exponent)
        );
    } else {
        println!(
            "horizonReached at t = {} after {} steps",
            est.t_low, est.steps
        );
    }
    Ok(())
}

fn run_pde(cfg: &RunConfig, as_json: bool) -> Result<(), CliError> {
    let run = run_until_blowup(&cfg.model, &cfg.pde_controls())?;
    fs::create_dir_all(&cfg.output)?;
    let mut csv = csv::Writer::from_path(cfg.output.join("trace.csv"))?;
    csv.write_record(["t", "U", "lp_p", "V0", "support_radius"])?;
    for s in &run.samples {
        csv.write_record([
            s.t.to_string(),
            s.average.to_string(),
            s.lp_p.to_string(),
            s.weighted.map(|v| v.to_string()).unwrap_or_default(),
            s.support_radius.to_string(),
        ])?;
    }
    csv.flush()?;
    let residual = ode_consistency_residual(&run).ok();
    let meta = json!({
        "engine": "pde",
        "estimate": run.blowup,
        "scheme": run.scheme,
        "max_leakage": run.max_leakage,
        "min_ratio": run.min_ratio,
        "ode_residual": residual,
        "config": cfg,
    });
    write_json(&cfg.output, "run_meta.json", &meta)?;
    report_estimate(&meta, &run.blowup, as_json)?;
    if !as_json {
        let first = run.samples.first().map(|s| s.average).unwrap_or(0.0);
        let last = run.samples.last().map(|s| s.average).unwrap_or(0.0);
        println!(
            "U: {first} -> {last}; leakage {:e}; residual {}",
            run.max_leakage,
            opt(residual)
        );
    }
    Ok(())
}

pub fn cmd_run(cfg: &RunConfig, as_json: bool) -> Result<(), CliError> {
    match cfg.engine {
        blowup_core::sweep::Engine::ComparisonOde => run_ode(cfg, as_json),
        blowup_core::sweep::Engine::Pde => run_pde(cfg, as_json),
    }
}

pub fn cmd_sweep(cfg: &RunConfig, as_json: bool) -> Result<(), CliError> {
    let plan = cfg.sweep_plan();
    let outcome = run_sweep(&plan)?;
    write_sweep(&cfg.output, &plan, &outcome)?;
    for r in &outcome.records {
        if as_json {
            println!("{}", serde_json::to_string(r)?);
        } else {
            println!(
                "epsilon {:<12} T_hat {:<22} blew_up {:<5} steps {}",
                r.epsilon,
                opt(r.t_hat),
                r.blew_up,
                r.steps
            );
        }
    }
    if !is_monotone(&outcome.records) {
        eprintln!("warning: T_hat increases with epsilon somewhere in this sweep");
    }
    if let Some(f) = &outcome.failure {
        return Err(CliError::Solver(format!(
            "run at epsilon {} failed ({:?}): {}; partial results kept in {}",
            f.epsilon,
            ExitReason::Tolerance,
            f.message,
            cfg.output.display()
        )));
    }
    if plan.exploratory && classify(&plan.base)?.growth == Growth::BelowThreshold {
        write_verdicts(&cfg.output, &[])?;
        if !as_json {
            println!("exploratory sweep below threshold: no theory law to fit");
        }
        return Ok(());
    }
    let (_, verdict) = fit_sweep(&plan, &outcome.records)?;
    write_verdicts(&cfg.output, std::slice::from_ref(&verdict))?;
    if as_json {
        println!("{}", serde_json::to_string(&verdict)?);
    } else {
        println!("{}", verdict.line());
    }
    Ok(())
}

pub fn cmd_report(dir: &Path, as_json: bool) -> Result<(), CliError> {
    let (meta, records) = read_sweep(dir)?;
    if records.iter().all(|r| !r.blew_up) {
        return Err(CliError::Insufficient(format!(
            "no blow-up records in {}",
            dir.display()
        )));
    }
    let (fit, verdict) = fit_sweep(&meta.plan, &records)?;
    write_verdicts(dir, std::slice::from_ref(&verdict))?;
    let aux = (fit.law == blowup_core::fit::Law::ThetaLaw)
        .then(|| lifespan_bound(&meta.plan.base).map(|b| b.aux_exponent))
        .transpose()?;
    let files = write_plot_data(dir, &records, meta.plan.base.effective_power(), aux)?;
    if as_json {
        println!("{}", serde_json::to_string(&verdict)?);
    } else {
        println!("law\ttheory\tfitted\ttolerance\tr2\tverdict");
        println!(
            "{}\t{:.3}\t{:.3}\t{:.3}\t{:.4}\t{}",
            verdict.law,
            verdict.theory_exponent,
            verdict.fitted_exponent,
            verdict.tolerance,
            verdict.r_squared,
            if verdict.pass { "PASS" } else { "FAIL" }
        );
        println!("{}", verdict.line());
        println!("plot data: {}", files.join(", "));
        if !meta.monotone {
            println!("warning: T_hat increases with epsilon somewhere in this sweep");
        }
    }
    Ok(())
}

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn selftest_checks() -> Vec<Check> {
    let mut out = Vec::new();
    let cubic = OdeProblem {
        damping: 0.0,
        mass_sq: 0.0,
        power: 3.0,
        frame: 2.0,
        source: blowup_core::ode::SourceCoefficient::UNIT,
        u0: 1.0,
        u1: 1.0,
        t_max: 10.0,
    };
    let t_hat = integrate_comparison(&cubic).ok().and_then(|e| e.t_hat);
    out.push(Check {
        name: "exact blow-up oracle",
        pass: t_hat.is_some_and(|t| (t - 1.0).abs() <= 1e-3),
        detail: format!("T_hat = {}", opt(t_hat)),
    });
    let ds = ModelParams {
        damping: 3.0,
        mass_sq: 2.0,
        growth_rate: 2.0,
        ..Default::default()
    };
    let head = classify(&ds)
        .map(|r| render_classification(&ds, &r)[0].clone())
        .unwrap_or_default();
    out.push(Check {
        name: "classify expanding example",
        pass: head == "dominantDissipation / exponential; r_crit=1",
        detail: head,
    });
    let ads = ModelParams {
        spacetime: Spacetime::AntiDeSitter,
        dim: 3,
        damping: 0.0,
        ..Default::default()
    };
    let branch = classify(&ads).ok();
    out.push(Check {
        name: "classify contracting example",
        pass: branch.as_ref().is_some_and(|r| {
            r.branch == Some(ContractingBranch::WeightedDominant)
                && r.contracting_critical_rate
                    .is_some_and(|v| (v - 2.0).abs() < 1e-12)
        }),
        detail: format!("{:?}", branch.and_then(|r| r.contracting_critical_rate)),
    });
    let k = bessel_k(0.5, 1.0).unwrap_or(f64::NAN);
    let exact = (std::f64::consts::PI / 2.0).sqrt() * (-1f64).exp();
    out.push(Check {
        name: "K_1/2(1) closed form",
        pass: (k - exact).abs() <= 1e-10,
        detail: format!("{k} vs {exact}"),
    });
    let exp_model = ModelParams {
        growth_rate: 1.0,
        ..Default::default()
    };
    let a = iterate(Variant::Exponential2Step, &exp_model, 4)
        .ok()
        .and_then(|t| t.exponents.a.clone());
    out.push(Check {
        name: "exponential a_j column",
        pass: a.as_deref() == Some(&[0.0, 1.0, 3.0, 7.0, 15.0][..]),
        detail: format!("{a:?}"),
    });
    let balanced = ModelParams {
        damping: 2.0,
        mass_sq: 1.0,
        growth_rate: 1.0,
        poly_exponent: -3.0,
        ..Default::default()
    };
    let partial = blowup_core::iteration::slicing_sequence(Variant::LogBalanced, &balanced, 3)
        .ok()
        .map(|s| s.partial[..4].to_vec());
    out.push(Check {
        name: "logBalanced partial products",
        pass: partial.as_deref() == Some(&[1.0, 1.5, 1.75, 1.875][..]),
        detail: format!("{partial:?}"),
    });
    out
}

pub fn cmd_selftest(as_json: bool) -> Result<(), CliError> {
    let checks = selftest_checks();
    let mut out = std::io::stdout().lock();
    for c in &checks {
        if as_json {
            writeln!(
                out,
                "{}",
                json!({"check": c.name, "pass": c.pass, "detail": c.detail})
            )?;
        } else {
            let tag = if c.pass { "PASS" } else { "FAIL" };
            writeln!(out, "{tag} {} ({})", c.name, c.detail)?;
        }
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(CliError::Solver(format!(
            "{failed} self-test check(s) failed"
        )));
    }
    Ok(())
}
