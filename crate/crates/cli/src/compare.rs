use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Args)]
pub struct CompareArgs {
    /// `runs.csv` written by `simulate`.
    #[arg(long)]
    pub simulation: PathBuf,
    /// `solution.json` written by `solve`.
    #[arg(long)]
    pub solution: PathBuf,
    /// Allowed deviation in Monte Carlo standard errors.
    #[arg(long, default_value_t = 3.0)]
    pub sigmas: f64,
    /// Allowed relative deviation, accepted in addition to `--sigmas`.
    #[arg(long, default_value_t = 0.0)]
    pub tolerance: f64,
    /// Write the report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Deserialize)]
struct RunRow {
    economy_id: String,
    k: Option<usize>,
    p_suc: Option<f64>,
    p_suc_se: Option<f64>,
    error: String,
}

#[derive(Deserialize)]
struct SolutionFile {
    economy_id: String,
    solution: SolutionRates,
}

#[derive(Deserialize)]
struct SolutionRates {
    p_suc: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct ClassComparison {
    pub k: usize,
    pub simulated: f64,
    /// Standard error across realizations, or the batch-means error of a
    /// single run.
    pub standard_error: f64,
    pub solver: f64,
    pub difference: f64,
    pub relative_difference: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub economy_id: String,
    pub realizations: usize,
    pub sigmas: f64,
    pub tolerance: f64,
    pub classes: Vec<ClassComparison>,
    pub pass: bool,
}

fn read_runs(path: &Path) -> Result<Vec<RunRow>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<RunRow>, _>>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn build_report(args: &CompareArgs) -> Result<Report, CliError> {
    if !(args.sigmas >= 0.0) || !(args.tolerance >= 0.0) {
        return Err(CliError::Config("sigmas and tolerance must be non-negative".into()));
    }
    let rows = read_runs(&args.simulation)?;
    let text = std::fs::read_to_string(&args.solution)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.solution.display())))?;
    let sol: SolutionFile =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", args.solution.display())))?;
    if rows.is_empty() {
        return Err(CliError::Config("simulation table is empty".into()));
    }
    if let Some(r) = rows.iter().find(|r| !r.error.is_empty()) {
        return Err(CliError::Config(format!("simulation table holds a failed run: {}", r.error)));
    }
    let foreign: Vec<&str> =
        rows.iter().map(|r| r.economy_id.as_str()).filter(|id| *id != sol.economy_id).collect();
    if let Some(id) = foreign.first() {
        return Err(CliError::Config(format!(
            "economy mismatch: simulation {id}, solution {}; compare runs of the same economy",
            sol.economy_id
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &rows {
        let (Some(k), Some(p)) = (r.k, r.p_suc) else {
            return Err(CliError::Config("simulation row without class or rate".into()));
        };
        by_class.entry(k).or_default().push((p, r.p_suc_se.unwrap_or(f64::NAN)));
    }
    if by_class.len() != sol.solution.p_suc.len() || by_class.keys().copied().ne(1..=sol.solution.p_suc.len()) {
        return Err(CliError::Config(format!(
            "simulation has classes {:?}, solution has {}",
            by_class.keys().collect::<Vec<_>>(),
            sol.solution.p_suc.len()
        )));
    }
    let mut classes = Vec::new();
    let mut realizations = 0;
    for (k, values) in &by_class {
        realizations = values.len();
        let n = values.len() as f64;
        let mean = values.iter().map(|v| v.0).sum::<f64>() / n;
        let se = if values.len() > 1 {
            let var = values.iter().map(|v| (v.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            values[0].1
        };
        let target = sol.solution.p_suc[k - 1];
        let diff = mean - target;
        let rel = if target != 0.0 { diff / target } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
        let pass = diff == 0.0 || diff.abs() <= args.sigmas * se || rel.abs() <= args.tolerance;
        classes.push(ClassComparison {
            k: *k,
            simulated: mean,
            standard_error: se,
            solver: target,
            difference: diff,
            relative_difference: rel,
            pass,
        });
    }
    Ok(Report {
        economy_id: sol.economy_id,
        realizations,
        sigmas: args.sigmas,
        tolerance: args.tolerance,
        pass: classes.iter().all(|c| c.pass),
        classes,
    })
}

pub fn run(args: &CompareArgs) -> Result<(), CliError> {
    let report = build_report(args)?;
    for c in &report.classes {
        println!(
            "class {}: simulated {:.6} ± {:.2e}, solver {:.6}, relative difference {:+.3e}  {}",
            c.k,
            c.simulated,
            c.standard_error,
            c.solver,
            c.relative_difference,
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
    if let Some(path) = &args.report {
        let bytes = serde_json::to_vec_pretty(&report).map_err(CliError::runtime)?;
        std::fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    }
    if report.pass {
        println!("all classes within tolerance");
        Ok(())
    } else {
        Err(CliError::Failed(format!("comparison failed for economy {}", report.economy_id)))
    }
}
