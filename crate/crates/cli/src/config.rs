use std::path::{Path, PathBuf};

use liquidity_core::analytic::{StepHalvingOptions, DEFAULT_LATTICE_CAP};
use liquidity_core::market::{Rule, DEFAULT_ENUMERATION_CAP};
use liquidity_core::simulate::{EconomyTemplate, SimConfig};
use liquidity_core::wealth::ShareRow;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// One experiment. Blocks not needed by a subcommand may be omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; overrides `simulation.seed`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub economy: Option<EconomyTemplate>,
    #[serde(default)]
    pub simulation: SimConfig,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub sweep: Option<SweepBlock>,
    #[serde(default)]
    pub oracle: Option<OracleBlock>,
    #[serde(default)]
    pub fit: Option<FitBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    /// Bisection for one class, step-halving otherwise.
    #[default]
    Auto,
    Bisection,
    StepHalving,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    pub method: SolverChoice,
    pub tolerance: f64,
    pub lattice_cap: usize,
    pub max_iterations: usize,
    pub initial_p: f64,
    pub initial_step: f64,
    /// Realization whose wealth sample is solved.
    pub realization: u64,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let s = StepHalvingOptions::default();
        Self {
            method: SolverChoice::Auto,
            tolerance: s.tolerance,
            lattice_cap: DEFAULT_LATTICE_CAP,
            max_iterations: s.max_iterations,
            initial_p: s.initial_p,
            initial_step: s.initial_step,
            realization: 0,
        }
    }
}

impl SolverBlock {
    pub fn step_halving(&self) -> StepHalvingOptions {
        StepHalvingOptions {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            lattice_cap: self.lattice_cap,
            initial_p: self.initial_p,
            initial_step: self.initial_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub betas: Vec<f64>,
}

/// A tiny economy given directly in integer quanta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleBlock {
    pub wealth: Vec<i64>,
    pub prices: Vec<i64>,
    pub counts: Vec<usize>,
    #[serde(default)]
    pub rule: Rule,
    #[serde(default = "enumeration_cap")]
    pub cap: u64,
}

fn enumeration_cap() -> u64 {
    DEFAULT_ENUMERATION_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitBlock {
    /// CSV with header `p_top,w_share`, relative to the config file.
    #[serde(default)]
    pub shares: Option<PathBuf>,
    #[serde(default)]
    pub rows: Vec<ShareRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub directory: PathBuf,
    /// Per-agent CSVs (`agents.csv`, `cash_histograms.csv`).
    pub agents: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), agents: true }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(fit) = config.fit.as_mut() {
            if let Some(p) = fit.shares.as_mut() {
                if p.is_relative() {
                    *p = path.parent().unwrap_or(Path::new(".")).join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn economy(&self) -> Result<&EconomyTemplate, CliError> {
        let e = self.economy.as_ref().ok_or_else(|| CliError::Config("missing economy block".into()))?;
        e.validate().map_err(CliError::config)?;
        Ok(e)
    }

    pub fn simulation(&self) -> Result<SimConfig, CliError> {
        let s = SimConfig { seed: self.seed, ..self.simulation.clone() };
        s.validate().map_err(CliError::config)?;
        Ok(s)
    }

    pub fn solver(&self) -> Result<&SolverBlock, CliError> {
        let s = &self.solver;
        if !(s.tolerance > 0.0) || !(s.initial_p > 0.0 && s.initial_p <= 1.0) || !(s.initial_step > 0.0) {
            return Err(CliError::Config("solver tolerance, initial_p and initial_step must be positive, initial_p ≤ 1".into()));
        }
        Ok(s)
    }
}
