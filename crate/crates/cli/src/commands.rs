use liquidity_core::analytic::{
    closed_form_c1_ps, mean_holdings, solve_multi_class_fixed_point, solve_single_class, threshold_probability,
    MeanFieldProblem, SelfConsistentSolution,
};
use liquidity_core::market::{exact_stationary_success_rates, Economy, ExactStationary};
use liquidity_core::simulate::{realization_economy, run_realizations, sweep_beta, BetaSummary, RunRecord};
use liquidity_core::wealth::{self, fit_pareto_exponent, ParetoFit, ShareTable};
use serde::Serialize;

use crate::config::{ExperimentConfig, SolverChoice};
use crate::output::{economy_id, num, Outputs};
use crate::{CliError, Common};

type Body = fn(&ExperimentConfig, &mut Outputs, &mut Vec<u64>) -> Result<(), CliError>;

/// Loads and overrides the configuration, runs `body`, then writes the
/// manifest whether or not `body` succeeded.
pub fn run(name: &str, common: &Common, body: Body) -> Result<(), CliError> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(dir) = &common.out_dir {
        config.output.directory = dir.clone();
    }
    if let Some(tol) = common.tolerance {
        config.solver.tolerance = tol;
    }
    config.simulation.seed = config.seed;
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().map_err(CliError::runtime)?;
    }
    let mut out = Outputs::create(&config.output.directory)?;
    let mut realizations = Vec::new();
    let status = body(&config, &mut out, &mut realizations);
    out.finish(name, &config, realizations, &status)?;
    status
}

fn core_runtime(e: liquidity_core::Error) -> CliError {
    CliError::runtime(e)
}

#[derive(Serialize)]
struct RunSummary<'a> {
    realization: u64,
    economy_id: Option<String>,
    beta: f64,
    n_agents: usize,
    n_goods: usize,
    total_wealth: f64,
    total_value: f64,
    prices: &'a [f64],
    class_counts: &'a [usize],
    p_suc: Option<&'a [f64]>,
    p_suc_se: Option<&'a [f64]>,
    p_bar: Option<f64>,
    gini_wealth: Option<f64>,
    gini_cash: Option<f64>,
    stationary: Option<bool>,
    burn_in_steps: Option<u64>,
    accelerated_moves: Option<u64>,
    measured_steps: Option<u64>,
    noop_attempts: Option<u64>,
    final_state_feasible: Option<bool>,
    trace: Option<&'a [Vec<f64>]>,
    error: Option<&'a str>,
}

fn summary<'a>(r: &'a RunRecord, id: Option<String>) -> RunSummary<'a> {
    let o = r.observables.as_ref();
    RunSummary {
        realization: r.realization,
        economy_id: id,
        beta: r.beta,
        n_agents: r.n_agents,
        n_goods: r.n_goods,
        total_wealth: r.total_wealth,
        total_value: r.total_value,
        prices: &r.prices,
        class_counts: &r.class_counts,
        p_suc: o.map(|o| o.p_suc.as_slice()),
        p_suc_se: o.map(|o| o.p_suc_se.as_slice()),
        p_bar: o.map(|o| o.p_bar),
        gini_wealth: o.map(|o| o.gini_wealth),
        gini_cash: o.map(|o| o.gini_cash),
        stationary: o.map(|o| o.stationary),
        burn_in_steps: o.map(|o| o.burn_in_steps),
        accelerated_moves: o.map(|o| o.accelerated_moves),
        measured_steps: o.map(|o| o.measured_steps),
        noop_attempts: o.map(|o| o.noop_attempts),
        final_state_feasible: o.map(|o| o.final_state_feasible),
        trace: o.map(|o| o.trace.as_slice()),
        error: r.error.as_deref(),
    }
}

fn failures(records: &[RunRecord]) -> Result<(), CliError> {
    let failed: Vec<String> =
        records.iter().filter_map(|r| r.error.as_ref().map(|e| format!("beta {} realization {}: {e}", r.beta, r.realization))).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("{} run(s) failed; {}", failed.len(), failed.join("; "))))
    }
}

pub fn simulate(cfg: &ExperimentConfig, out: &mut Outputs, realizations: &mut Vec<u64>) -> Result<(), CliError> {
    let template = cfg.economy()?;
    let sim = cfg.simulation()?;
    realizations.extend(0..sim.realizations as u64);
    let records = run_realizations(template, &sim).map_err(CliError::config)?;
    let ids: Vec<Option<String>> = records
        .iter()
        .map(|r| realization_economy(template, sim.seed, r.realization).ok().map(|e| economy_id(&e.economy)))
        .collect();

    let mut runs = Vec::new();
    let mut agents = Vec::new();
    let mut holdings = Vec::new();
    let mut hist = Vec::new();
    for (r, id) in records.iter().zip(&ids) {
        let id = id.clone().unwrap_or_default();
        let Some(o) = &r.observables else {
            runs.push(vec![id, num(r.beta), r.realization.to_string(), String::new(), String::new(), String::new(),
                String::new(), String::new(), String::new(), String::new(), r.error.clone().unwrap_or_default()]);
            continue;
        };
        for k in 0..o.k_classes() {
            runs.push(vec![
                id.clone(),
                num(r.beta),
                r.realization.to_string(),
                (k + 1).to_string(),
                num(r.prices[k]),
                r.class_counts[k].to_string(),
                num(o.p_suc[k]),
                num(o.p_suc_se[k]),
                o.attempts[k].to_string(),
                o.successes[k].to_string(),
                String::new(),
            ]);
        }
        if cfg.output.agents {
            for (i, (c, l)) in o.wealth.iter().zip(&o.mean_cash).enumerate() {
                agents.push(vec![r.realization.to_string(), i.to_string(), num(*c), num(*l)]);
                for k in 0..o.k_classes() {
                    let j = i * o.k_classes() + k;
                    holdings.push(vec![
                        r.realization.to_string(),
                        i.to_string(),
                        (k + 1).to_string(),
                        num(o.mean_holdings[j]),
                        num(o.mean_holdings_se[j]),
                    ]);
                }
            }
            for h in &o.cash_histograms {
                for (bin, p) in &h.bins {
                    hist.push(vec![r.realization.to_string(), h.agent.to_string(), num(*bin as f64 * h.bin_width), num(*p)]);
                }
            }
        }
    }
    out.write_csv(
        "runs.csv",
        &["economy_id", "beta", "realization", "k", "price", "count", "p_suc", "p_suc_se", "attempts", "successes", "error"],
        &runs,
    )?;
    if cfg.output.agents {
        out.write_csv("agents.csv", &["realization", "agent", "wealth", "mean_cash"], &agents)?;
        out.write_csv("holdings.csv", &["realization", "agent", "k", "mean_holding", "mean_holding_se"], &holdings)?;
        out.write_csv("cash_histograms.csv", &["realization", "agent", "cash", "probability"], &hist)?;
    }
    let summaries: Vec<RunSummary> = records.iter().zip(ids).map(|(r, id)| summary(r, id)).collect();
    out.write_json("observables.json", &summaries)?;
    for r in &records {
        if let Some(o) = &r.observables {
            let p: Vec<String> = o.p_suc.iter().map(|p| format!("{p:.4}")).collect();
            println!("realization {}: p_suc = [{}], p_bar = {:.4}", r.realization, p.join(", "), o.p_bar);
        }
    }
    failures(&records)
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    economy_id: String,
    beta: f64,
    realization: u64,
    n_agents: usize,
    prices: Vec<f64>,
    class_counts: &'a [usize],
    solution: &'a SelfConsistentSolution,
    /// Large-λ closed form `(c⁽¹⁾, p_suc)` for one class with `β > 1`.
    closed_form: Option<(f64, f64)>,
}

pub fn solve(cfg: &ExperimentConfig, out: &mut Outputs, realizations: &mut Vec<u64>) -> Result<(), CliError> {
    let template = cfg.economy()?;
    let solver = cfg.solver()?;
    realizations.push(solver.realization);
    let r = realization_economy(template, cfg.seed, solver.realization).map_err(CliError::config)?;
    let problem = MeanFieldProblem::from_economy(&r.economy).map_err(CliError::config)?;
    let k = problem.k_classes();
    let method = match solver.method {
        SolverChoice::Auto if k == 1 => SolverChoice::Bisection,
        SolverChoice::Auto => SolverChoice::StepHalving,
        m => m,
    };
    let solution = match method {
        SolverChoice::Bisection => solve_single_class(&problem, solver.tolerance),
        _ => solve_multi_class_fixed_point(&problem, &solver.step_halving()),
    }
    .map_err(core_runtime)?;
    let closed_form = if k == 1 { closed_form_c1_ps(template.beta, r.goods.actual_ratio).ok() } else { None };
    let goods = &r.economy.goods;
    out.write_json(
        "solution.json",
        &SolveOutput {
            economy_id: economy_id(&r.economy),
            beta: template.beta,
            realization: solver.realization,
            n_agents: r.economy.n_agents(),
            prices: (0..k).map(|c| goods.price(c)).collect(),
            class_counts: &goods.counts,
            solution: &solution,
            closed_form,
        },
    )?;
    let z = mean_holdings(&problem, &solution).map_err(core_runtime)?;
    let sat = threshold_probability(&problem, &solution).map_err(core_runtime)?;
    let mut rows = Vec::new();
    for (g, (c, w)) in solution.level_wealth.iter().zip(&solution.level_weights).enumerate() {
        for c_k in 0..k {
            rows.push(vec![num(*c), num(*w), (c_k + 1).to_string(), num(z[g][c_k]), num(sat[g][c_k])]);
        }
    }
    out.write_csv("levels.csv", &["wealth", "weight", "k", "mean_holding", "p_saturated"], &rows)?;
    for c in 0..k {
        println!(
            "class {}: p_suc = {:.6}, lambda = {:.6}, c_threshold = {:.6}",
            c + 1,
            solution.p_suc[c],
            solution.lambda[c],
            solution.thresholds[c]
        );
    }
    if let Some((c1, p)) = closed_form {
        println!("closed form: c1 = {c1:.6}, p_suc = {p:.6}");
    }
    if solution.converged {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("solver stopped unconverged after {} iterations", solution.iterations)))
    }
}

pub fn sweep(cfg: &ExperimentConfig, out: &mut Outputs, realizations: &mut Vec<u64>) -> Result<(), CliError> {
    let template = cfg.economy()?;
    let sim = cfg.simulation()?;
    let betas = &cfg.sweep.as_ref().ok_or_else(|| CliError::Config("missing sweep block".into()))?.betas;
    if betas.is_empty() {
        return Err(CliError::Config("sweep.betas is empty".into()));
    }
    realizations.extend(0..sim.realizations as u64);
    let results = sweep_beta(betas, template, &sim).map_err(CliError::config)?;
    let mut rows = Vec::new();
    let mut agg = Vec::new();
    for s in &results.summaries {
        for (k, e) in s.p_suc.iter().enumerate() {
            rows.push(vec![
                num(s.beta),
                (k + 1).to_string(),
                num(e.mean),
                num(e.min),
                num(e.max),
                num(e.sd),
                s.realizations.to_string(),
                s.failures.to_string(),
            ]);
        }
        agg.push(vec![
            num(s.beta),
            num(s.p_bar.mean),
            num(s.p_bar.min),
            num(s.p_bar.max),
            num(s.gini_wealth.mean),
            num(s.gini_cash.mean),
            num(s.gini_cash.min),
            num(s.gini_cash.max),
        ]);
    }
    out.write_csv("sweep.csv", &["beta", "k", "p_suc", "p_suc_min", "p_suc_max", "p_suc_sd", "realizations", "failures"], &rows)?;
    out.write_csv(
        "aggregate.csv",
        &["beta", "p_bar", "p_bar_min", "p_bar_max", "gini_wealth", "gini_cash", "gini_cash_min", "gini_cash_max"],
        &agg,
    )?;
    let mut runs = Vec::new();
    for r in &results.records {
        match &r.observables {
            Some(o) => {
                for k in 0..o.k_classes() {
                    runs.push(vec![
                        num(r.beta),
                        r.realization.to_string(),
                        (k + 1).to_string(),
                        num(o.p_suc[k]),
                        num(o.p_suc_se[k]),
                        num(o.p_bar),
                        num(o.gini_wealth),
                        num(o.gini_cash),
                        String::new(),
                    ]);
                }
            }
            None => runs.push(vec![
                num(r.beta),
                r.realization.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                r.error.clone().unwrap_or_default(),
            ]),
        }
    }
    out.write_csv(
        "runs.csv",
        &["beta", "realization", "k", "p_suc", "p_suc_se", "p_bar", "gini_wealth", "gini_cash", "error"],
        &runs,
    )?;
    out.write_json("observables.json", &results.summaries)?;
    for s in &results.summaries {
        print_summary(s);
    }
    failures(&results.records)
}

fn print_summary(s: &BetaSummary) {
    let p: Vec<String> = s.p_suc.iter().map(|e| format!("{:.4}", e.mean)).collect();
    println!(
        "beta {:.3}: p_bar = {:.4}, G_c = {:.4}, G_l = {:.4}, p_suc = [{}]",
        s.beta,
        s.p_bar.mean,
        s.gini_wealth.mean,
        s.gini_cash.mean,
        p.join(", ")
    );
}

#[derive(Serialize)]
struct OracleOutput<'a> {
    wealth: &'a [i64],
    prices: &'a [i64],
    counts: &'a [usize],
    rule: String,
    result: &'a ExactStationary,
}

pub fn oracle(cfg: &ExperimentConfig, out: &mut Outputs, _: &mut Vec<u64>) -> Result<(), CliError> {
    let block = cfg.oracle.as_ref().ok_or_else(|| CliError::Config("missing oracle block".into()))?;
    let economy = Economy::from_quanta(block.wealth.clone(), block.prices.clone(), block.counts.clone())
        .map_err(CliError::config)?;
    let result = exact_stationary_success_rates(&economy, block.rule, block.cap).map_err(|e| match e {
        liquidity_core::Error::Parameter(_) => CliError::config(e),
        e => CliError::runtime(e),
    })?;
    out.write_json(
        "oracle.json",
        &OracleOutput {
            wealth: &block.wealth,
            prices: &block.prices,
            counts: &block.counts,
            rule: block.rule.label(),
            result: &result,
        },
    )?;
    println!("feasible states: {}", result.n_states);
    for (i, s) in result.states.iter().enumerate() {
        println!("  state {}: owners {:?}", i + 1, s);
    }
    for (k, p) in result.p_suc.iter().enumerate() {
        println!("p_suc[{}] = {:.4}", k + 1, p);
    }
    if !result.ergodic {
        println!("frozen: no trade can succeed");
    }
    Ok(())
}

#[derive(Serialize)]
struct FitOutput<'a> {
    rows: usize,
    fit: &'a ParetoFit,
}

pub fn fit(cfg: &ExperimentConfig, out: &mut Outputs, _: &mut Vec<u64>) -> Result<(), CliError> {
    let block = cfg.fit.as_ref().ok_or_else(|| CliError::Config("missing fit block".into()))?;
    let table = match &block.shares {
        Some(path) if block.rows.is_empty() => ShareTable::from_csv(path).map_err(CliError::config)?,
        None => ShareTable::new(block.rows.clone()).map_err(CliError::config)?,
        Some(_) => return Err(CliError::Config("give either fit.shares or fit.rows, not both".into())),
    };
    let result = fit_pareto_exponent(&table).map_err(core_runtime)?;
    out.write_json("fit.json", &FitOutput { rows: table.rows.len(), fit: &result })?;
    match result.error {
        Some(e) => println!("beta = {:.3} ± {:.3}", result.beta, e),
        None => println!("beta = {:.3} (two rows, no error estimate)", result.beta),
    }
    Ok(())
}

pub fn gini(cfg: &ExperimentConfig, out: &mut Outputs, realizations: &mut Vec<u64>) -> Result<(), CliError> {
    let template = cfg.economy()?;
    let n = cfg.simulation()?.realizations as u64;
    let mut rows = Vec::new();
    for r in 0..n {
        realizations.push(r);
        let (w, _) = template.draw_wealth(cfg.seed, r).map_err(CliError::config)?;
        let g = wealth::gini(&w.values).map_err(core_runtime)?;
        println!("realization {r}: G_c = {g:.4}, mean wealth = {:.4}", w.mean());
        rows.push(vec![r.to_string(), num(g), num(w.mean())]);
    }
    out.write_csv("gini.csv", &["realization", "gini_wealth", "mean_wealth"], &rows)
}
