//! Run configuration: a TOML file with `[model]`, `[ode]`, `[ode_solver]`,
//! `[pde]`, `[sweep]` and `[iterate]` sections, plus `--set key=value`
//! overrides using dotted keys.

use std::path::{Path, PathBuf};

use blowup_core::fit::{FitOptions, Tolerances};
use blowup_core::ode::SolverControls;
use blowup_core::pde::PdeControls;
use blowup_core::sweep::{geometric_grid, Engine, OdeSetup, SweepPlan};
use blowup_core::ModelParams;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::exit::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Explicit list; overrides the geometric grid below.
    pub epsilons: Option<Vec<f64>>,
    pub start: f64,
    pub ratio: f64,
    pub count: usize,
    pub workers: usize,
    pub exploratory: bool,
    pub discard_largest: usize,
    pub power_tolerance: f64,
    pub exp_tolerance: f64,
    pub min_r_squared: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        let tol = Tolerances::default();
        SweepSection {
            epsilons: None,
            start: 2f64.powi(-4),
            ratio: 0.5,
            count: 11,
            workers: 0,
            exploratory: false,
            discard_largest: FitOptions::default().discard_largest,
            power_tolerance: tol.power,
            exp_tolerance: tol.exp,
            min_r_squared: tol.min_r_squared,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterateSection {
    pub j_max: usize,
    /// Slicing variant; chosen from the regime when absent.
    pub variant: Option<String>,
}

impl Default for IterateSection {
    fn default() -> Self {
        IterateSection {
            j_max: 12,
            variant: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    pub engine: Engine,
    pub ode: OdeSetup,
    pub ode_solver: SolverControls,
    pub pde: PdeControls,
    pub sweep: SweepSection,
    pub iterate: IterateSection,
    pub output: PathBuf,
    /// Seed for the data-profile perturbation (PDE engine).
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelParams::default(),
            engine: Engine::ComparisonOde,
            ode: OdeSetup::default(),
            ode_solver: SolverControls::default(),
            pde: PdeControls::default(),
            sweep: SweepSection::default(),
            iterate: IterateSection::default(),
            output: PathBuf::from("out"),
            seed: None,
        }
    }
}

impl RunConfig {
    pub fn pde_controls(&self) -> PdeControls {
        PdeControls {
            perturbation_seed: self.seed.or(self.pde.perturbation_seed),
            ..self.pde
        }
    }

    pub fn sweep_plan(&self) -> SweepPlan {
        let s = &self.sweep;
        let epsilons = s
            .epsilons
            .clone()
            .unwrap_or_else(|| geometric_grid(s.start, s.ratio, s.count));
        SweepPlan {
            base: self.model,
            epsilons,
            engine: self.engine,
            ode: self.ode,
            ode_controls: self.ode_solver,
            pde_controls: self.pde_controls(),
            workers: s.workers,
            exploratory: s.exploratory,
            fit: FitOptions {
                discard_largest: s.discard_largest,
                ..FitOptions::default()
            },
            tolerances: Tolerances {
                power: s.power_tolerance,
                exp: s.exp_tolerance,
                min_r_squared: s.min_r_squared,
            },
        }
    }
}

/// Parse `value` as a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

fn apply_override(table: &mut Table, assignment: &str) -> Result<(), CliError> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set `{assignment}`: expected key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!(
            "--set `{assignment}`: empty key segment"
        )));
    }
    let (last, parents) = path
        .split_last()
        .expect("split yields at least one segment");
    let mut cursor = table;
    for seg in parents {
        let entry = cursor
            .entry(seg.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cursor = entry.as_table_mut().ok_or_else(|| {
            CliError::Config(format!("--set `{assignment}`: `{seg}` is not a section"))
        })?;
    }
    cursor.insert(last.to_string(), parse_value(value));
    Ok(())
}

fn describe(err: toml::de::Error, source: &str) -> CliError {
    CliError::Config(format!("{source}: {}", err.to_string().trim_end()))
}

/// Read `path` (if any), apply `overrides`, and validate.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let (text, source) = match path {
        Some(p) => (
            std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
            p.display().to_string(),
        ),
        None => (String::new(), "<defaults>".to_string()),
    };
    // typed parse of the file alone keeps line/column diagnostics
    toml::from_str::<RunConfig>(&text).map_err(|e| describe(e, &source))?;
    let mut table: Table = text.parse().map_err(|e| describe(e, &source))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let config: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e| describe(e, "--set"))?;
    config
        .model
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    config
        .pde
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(config)
}
