//! Epsilon sweeps over comparison-ODE and PDE runs.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_against_theory, FitOptions, FitResult, LifespanPoint, Tolerances, Verdict};
use crate::ode::{
    integrate_comparison_with, BlowupEstimate, ExitReason, OdeProblem, SolverControls,
};
use crate::params::{holder_frame_constant, ModelParams};
use crate::pde::{run_until_blowup, PdeControls};
use crate::regimes::{classify, log_implicit_profile, Growth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[serde(alias = "ode")]
    ComparisonOde,
    Pde,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::ComparisonOde => "ode",
            Engine::Pde => "pde",
        })
    }
}

impl FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "ode" | "comparisonode" => Ok(Engine::ComparisonOde),
            "pde" => Ok(Engine::Pde),
            _ => Err(Error::param(
                "engine",
                format!("unknown engine `{s}` (expected ode or pde)"),
            )),
        }
    }
}

/// `count` values `start, start·ratio, …`.
pub fn geometric_grid(start: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start * ratio.powi(k as i32)).collect()
}

/// Comparison-ODE data and source constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeSetup {
    /// Frame constant; `None` uses the Hölder constant of the support ball.
    pub frame: Option<f64>,
    /// `U(0)/ε` and `U'(0)/ε`.
    pub u0: f64,
    pub u1: f64,
    pub t_max: f64,
}

impl Default for OdeSetup {
    fn default() -> Self {
        OdeSetup {
            frame: Some(1.0),
            u0: 1.0,
            u1: 1.0,
            t_max: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub base: ModelParams,
    pub epsilons: Vec<f64>,
    pub engine: Engine,
    pub ode: OdeSetup,
    pub ode_controls: SolverControls,
    pub pde_controls: PdeControls,
    pub workers: usize,
    /// Allows plans whose regime has no blow-up threshold.
    pub exploratory: bool,
    pub fit: FitOptions,
    pub tolerances: Tolerances,
}

impl SweepPlan {
    /// Default grid `2^{-4}, 2^{-5}, …` (11 points) on the comparison ODE.
    pub fn new(base: ModelParams, engine: Engine) -> SweepPlan {
        SweepPlan {
            base,
            epsilons: geometric_grid(2f64.powi(-4), 0.5, 11),
            engine,
            ode: OdeSetup::default(),
            ode_controls: SolverControls::default(),
            pde_controls: PdeControls::default(),
            workers: 0,
            exploratory: false,
            fit: FitOptions::default(),
            tolerances: Tolerances::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilons.len() < 4 {
            return Err(Error::param("epsilons", "a sweep needs at least 4 values"));
        }
        if self.epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::param(
                "epsilons",
                "values must be positive and finite",
            ));
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::param(
                "epsilons",
                "values must be strictly decreasing",
            ));
        }
        self.base.validate()?;
        if !self.exploratory && classify(&self.base)?.growth == Growth::BelowThreshold {
            return Err(Error::RegimeMismatch(
                "regime is below threshold; set exploratory to sweep anyway".into(),
            ));
        }
        Ok(())
    }

    fn params_at(&self, epsilon: f64) -> ModelParams {
        ModelParams {
            epsilon,
            ..self.base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub epsilon: f64,
    pub t_hat: Option<f64>,
    pub blew_up: bool,
    pub steps: usize,
    pub t_low: f64,
    pub reason: ExitReason,
    pub fit_exponent: Option<f64>,
}

impl SweepRecord {
    fn from_estimate(epsilon: f64, est: &BlowupEstimate) -> SweepRecord {
        SweepRecord {
            epsilon,
            t_hat: est.t_hat,
            blew_up: est.blew_up,
            steps: est.steps,
            t_low: est.t_low,
            reason: est.reason,
            fit_exponent: est.fit_exponent,
        }
    }
}

/// Run that stopped the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub epsilon: f64,
    pub reason: ExitReason,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    /// Sorted by decreasing `ε`; truncated before a failed run.
    pub records: Vec<SweepRecord>,
    pub failure: Option<SweepFailure>,
}

impl SweepOutcome {
    pub fn points(&self) -> Vec<LifespanPoint> {
        lifespan_points(&self.records)
    }
}

pub fn lifespan_points(records: &[SweepRecord]) -> Vec<LifespanPoint> {
    records
        .iter()
        .filter_map(|r| {
            r.t_hat.filter(|_| r.blew_up).map(|t_hat| LifespanPoint {
                epsilon: r.epsilon,
                t_hat,
            })
        })
        .collect()
}

/// True when `T̂` does not increase with `ε` (runs without blow-up count as `+∞`).
pub fn is_monotone(records: &[SweepRecord]) -> bool {
    let mut sorted: Vec<&SweepRecord> = records.iter().collect();
    sorted.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let value = |r: &SweepRecord| {
        if r.blew_up {
            r.t_hat.unwrap_or(f64::INFINITY)
        } else {
            f64::INFINITY
        }
    };
    sorted.windows(2).all(|w| value(w[0]) <= value(w[1]))
}

fn run_one(plan: &SweepPlan, epsilon: f64) -> Result<BlowupEstimate> {
    let params = plan.params_at(epsilon);
    match plan.engine {
        Engine::ComparisonOde => {
            let frame = match plan.ode.frame {
                Some(f) => f,
                None => holder_frame_constant(&params),
            };
            let problem =
                OdeProblem::from_params(&params, frame, plan.ode.u0, plan.ode.u1, plan.ode.t_max);
            integrate_comparison_with(&problem, &plan.ode_controls)
        }
        Engine::Pde => run_until_blowup(&params, &plan.pde_controls).map(|run| run.blowup),
    }
}

/// One run per `ε`, in parallel on `workers` threads (0 = all cores).
///
/// Results are gathered in `ε` order, so the outcome does not depend on
/// scheduling. The first failed run in that order ends the record list.
pub fn run_sweep(plan: &SweepPlan) -> Result<SweepOutcome> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    let results: Vec<Result<BlowupEstimate>> = pool.install(|| {
        plan.epsilons
            .par_iter()
            .map(|&e| run_one(plan, e))
            .collect()
    });
    let mut records = Vec::with_capacity(results.len());
    let mut failure = None;
    for (&epsilon, result) in plan.epsilons.iter().zip(results) {
        match result {
            Ok(est) => records.push(SweepRecord::from_estimate(epsilon, &est)),
            Err(e) => {
                failure = Some(SweepFailure {
                    epsilon,
                    reason: ExitReason::Tolerance,
                    message: e.to_string(),
                });
                break;
            }
        }
    }
    Ok(SweepOutcome { records, failure })
}

/// Fit the regime's law to a finished sweep.
pub fn fit_sweep(plan: &SweepPlan, records: &[SweepRecord]) -> Result<(FitResult, Verdict)> {
    fit_against_theory(
        &lifespan_points(records),
        &plan.base,
        &plan.fit,
        &plan.tolerances,
    )
}

pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_NDJSON: &str = "sweep.ndjson";
pub const SWEEP_META: &str = "sweep_meta.json";
pub const VERDICTS: &str = "verdicts.ndjson";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMeta {
    pub plan: SweepPlan,
    pub failure: Option<SweepFailure>,
    pub monotone: bool,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write `sweep.csv`, `sweep.ndjson` and `sweep_meta.json` into `dir`.
pub fn write_sweep(dir: &Path, plan: &SweepPlan, outcome: &SweepOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut csv = csv::Writer::from_path(dir.join(SWEEP_CSV))?;
    csv.write_record(["epsilon", "T_hat", "blew_up", "steps"])?;
    for r in &outcome.records {
        csv.write_record([
            r.epsilon.to_string(),
            opt(r.t_hat),
            r.blew_up.to_string(),
            r.steps.to_string(),
        ])?;
    }
    csv.flush()?;
    let mut nd = fs::File::create(dir.join(SWEEP_NDJSON))?;
    for r in &outcome.records {
        writeln!(nd, "{}", serde_json::to_string(r)?)?;
    }
    let meta = SweepMeta {
        plan: plan.clone(),
        failure: outcome.failure.clone(),
        monotone: is_monotone(&outcome.records),
    };
    fs::write(
        dir.join(SWEEP_META),
        serde_json::to_string_pretty(&meta)? + "\n",
    )?;
    Ok(())
}

/// Read back what [`write_sweep`] wrote.
pub fn read_sweep(dir: &Path) -> Result<(SweepMeta, Vec<SweepRecord>)> {
    let meta_path = dir.join(SWEEP_META);
    if !meta_path.exists() {
        return Err(Error::InsufficientData(format!(
            "no {SWEEP_META} in {}",
            dir.display()
        )));
    }
    let meta: SweepMeta = serde_json::from_str(&fs::read_to_string(meta_path)?)?;
    let file = fs::File::open(dir.join(SWEEP_NDJSON))
        .map_err(|e| Error::InsufficientData(format!("{SWEEP_NDJSON}: {e}")))?;
    let mut records = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            records.push(serde_json::from_str(&line)?);
        }
    }
    Ok((meta, records))
}

pub fn write_verdicts(dir: &Path, verdicts: &[Verdict]) -> Result<()> {
    let mut f = fs::File::create(dir.join(VERDICTS))?;
    for v in verdicts {
        writeln!(f, "{}", serde_json::to_string(v)?)?;
    }
    Ok(())
}

/// Plot-ready columns: `ln ε` vs `ln T̂`, `ε^{-(q-1)}` vs `ln T̂`, and with
/// `aux` also `ln ε` vs `ln θ(T̂)`. Returns the file names written.
pub fn write_plot_data(
    dir: &Path,
    records: &[SweepRecord],
    q: f64,
    aux: Option<f64>,
) -> Result<Vec<String>> {
    let pts = lifespan_points(records);
    let mut loglog = csv::Writer::from_path(dir.join("plot_loglog.csv"))?;
    loglog.write_record(["ln_epsilon", "ln_T_hat"])?;
    let mut explaw = csv::Writer::from_path(dir.join("plot_explaw.csv"))?;
    explaw.write_record(["epsilon_pow", "ln_T_hat"])?;
    for p in &pts {
        loglog.write_record([p.epsilon.ln().to_string(), p.t_hat.ln().to_string()])?;
        explaw.write_record([
            p.epsilon.powf(-(q - 1.0)).to_string(),
            p.t_hat.ln().to_string(),
        ])?;
    }
    loglog.flush()?;
    explaw.flush()?;
    let mut files = vec!["plot_loglog.csv".to_string(), "plot_explaw.csv".to_string()];
    if let Some(aux) = aux {
        let mut theta = csv::Writer::from_path(dir.join("plot_theta.csv"))?;
        theta.write_record(["ln_epsilon", "ln_theta"])?;
        for p in &pts {
            theta.write_record([
                p.epsilon.ln().to_string(),
                log_implicit_profile(aux, p.t_hat).to_string(),
            ])?;
        }
        theta.flush()?;
        files.push("plot_theta.csv".into());
    }
    Ok(files)
}
