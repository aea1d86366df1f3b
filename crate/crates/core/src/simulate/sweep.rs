//! Realizations and β sweeps.
//!
//! Wealth and dynamics seeds depend on `(master seed, realization)` only, so
//! every β in a sweep sees the same uniform draws for its wealth sample.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_simulation, Observables, SimConfig};
use crate::error::{param, Result};
use crate::market::{build_goods, Economy, GoodsBuild};
use crate::numeric;
use crate::rng::{self, Purpose};
use crate::wealth::{self, Adjustment, WealthVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum WealthKind {
    Pareto,
    AdjustedPareto,
    Staircase { base: f64, levels: usize },
}

/// Everything needed to draw an economy, apart from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomyTemplate {
    pub n_agents: usize,
    pub beta: f64,
    #[serde(default = "one")]
    pub c_min: f64,
    pub wealth: WealthKind,
    #[serde(default = "one_class")]
    pub k_classes: usize,
    pub price_1: f64,
    #[serde(default = "three_halves")]
    pub price_ratio: f64,
    /// `C / Π`, greater than one.
    pub wealth_to_value: f64,
}

fn one() -> f64 {
    1.0
}
fn one_class() -> usize {
    1
}
fn three_halves() -> f64 {
    1.5
}

impl EconomyTemplate {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(param("need at least one agent"));
        }
        if !(self.wealth_to_value > 1.0) {
            return Err(param(format!("C/Π must exceed 1, got {}", self.wealth_to_value)));
        }
        if self.wealth == WealthKind::AdjustedPareto && !(self.beta > 1.0) {
            return Err(param("adjusted Pareto wealth needs beta > 1"));
        }
        Ok(())
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        Self { beta, ..self.clone() }
    }

    /// The wealth profile for a realization.
    pub fn draw_wealth(&self, seed: u64, realization: u64) -> Result<(WealthVector, Option<Adjustment>)> {
        self.validate()?;
        match &self.wealth {
            WealthKind::Pareto | WealthKind::AdjustedPareto => {
                let mut r = rng::stream(seed, Purpose::Wealth, realization);
                let w = wealth::sample_pareto_with(self.beta, self.c_min, self.n_agents, &mut r)?;
                if self.wealth == WealthKind::AdjustedPareto {
                    let mut r = rng::stream(seed, Purpose::Adjust, realization);
                    let (w, adj) = wealth::adjust_to_expected_mean(&w, &mut r)?;
                    Ok((w, Some(adj)))
                } else {
                    Ok((w, None))
                }
            }
            WealthKind::Staircase { base, levels } => {
                let s = wealth::build_staircase(self.beta, self.c_min, *base, *levels, self.n_agents)?;
                Ok((s.to_wealth(), None))
            }
        }
    }
}

/// Goods for `wealth` at the template's prices and value ratio.
pub fn build_economy(wealth: &WealthVector, template: &EconomyTemplate) -> Result<(Economy, GoodsBuild)> {
    let built = build_goods(
        wealth,
        1.0 / template.wealth_to_value,
        template.k_classes,
        template.price_1,
        template.price_ratio,
    )?;
    Ok((Economy::new(wealth, built.goods.clone())?, built))
}

#[derive(Debug, Clone)]
pub struct RealizationEconomy {
    pub economy: Economy,
    pub wealth: WealthVector,
    pub goods: GoodsBuild,
    pub adjustment: Option<Adjustment>,
}

pub fn realization_economy(template: &EconomyTemplate, seed: u64, realization: u64) -> Result<RealizationEconomy> {
    let (wealth, adjustment) = template.draw_wealth(seed, realization)?;
    let (economy, goods) = build_economy(&wealth, template)?;
    Ok(RealizationEconomy { economy, wealth, goods, adjustment })
}

/// One realization, or why it failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub beta: f64,
    pub realization: u64,
    pub n_agents: usize,
    pub n_goods: usize,
    pub total_wealth: f64,
    pub total_value: f64,
    pub prices: Vec<f64>,
    pub class_counts: Vec<usize>,
    pub observables: Option<Observables>,
    pub error: Option<String>,
}

fn run_one(template: &EconomyTemplate, config: &SimConfig, realization: u64, keep_holdings: bool) -> RunRecord {
    let mut record = RunRecord {
        beta: template.beta,
        realization,
        n_agents: template.n_agents,
        n_goods: 0,
        total_wealth: 0.0,
        total_value: 0.0,
        prices: Vec::new(),
        class_counts: Vec::new(),
        observables: None,
        error: None,
    };
    let result = realization_economy(template, config.seed, realization).and_then(|r| {
        record.n_goods = r.economy.goods.total_goods();
        record.total_wealth = r.goods.total_wealth;
        record.total_value = r.goods.total_value;
        record.prices = (0..r.economy.goods.k_classes()).map(|k| r.economy.goods.price(k)).collect();
        record.class_counts = r.economy.goods.counts.clone();
        run_simulation(&r.economy, config, realization)
    });
    match result {
        Ok(mut obs) => {
            if !keep_holdings {
                obs.mean_holdings = Vec::new();
                obs.mean_holdings_se = Vec::new();
            }
            record.observables = Some(obs);
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

/// `config.realizations` independent runs, in realization order.
pub fn run_realizations(template: &EconomyTemplate, config: &SimConfig) -> Result<Vec<RunRecord>> {
    config.validate()?;
    template.validate()?;
    Ok((0..config.realizations as u64)
        .into_par_iter()
        .map(|r| run_one(template, config, r, true))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEnvelope {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Standard deviation across realizations.
    pub sd: f64,
}

impl ClassEnvelope {
    fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: f64::NAN, min: f64::NAN, max: f64::NAN, sd: f64::NAN };
        }
        Self {
            mean: numeric::mean(values),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            sd: numeric::std_dev(values),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSummary {
    pub beta: f64,
    pub realizations: usize,
    pub failures: usize,
    pub p_suc: Vec<ClassEnvelope>,
    pub p_bar: ClassEnvelope,
    pub gini_wealth: ClassEnvelope,
    pub gini_cash: ClassEnvelope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResults {
    pub records: Vec<RunRecord>,
    pub summaries: Vec<BetaSummary>,
}

/// Runs every `(β, realization)` pair; failed points are recorded and the
/// sweep carries on. Per-agent holdings are dropped to bound memory.
pub fn sweep_beta(betas: &[f64], template: &EconomyTemplate, config: &SimConfig) -> Result<SweepResults> {
    if betas.is_empty() {
        return Err(param("beta grid is empty"));
    }
    config.validate()?;
    let jobs: Vec<(usize, u64)> =
        (0..betas.len()).flat_map(|b| (0..config.realizations as u64).map(move |r| (b, r))).collect();
    let records: Vec<RunRecord> = jobs
        .into_par_iter()
        .map(|(b, r)| {
            let t = template.with_beta(betas[b]);
            match t.validate() {
                Ok(()) => run_one(&t, config, r, false),
                Err(e) => RunRecord {
                    beta: betas[b],
                    realization: r,
                    n_agents: t.n_agents,
                    n_goods: 0,
                    total_wealth: 0.0,
                    total_value: 0.0,
                    prices: Vec::new(),
                    class_counts: Vec::new(),
                    observables: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let summaries = betas
        .iter()
        .enumerate()
        .map(|(b, beta)| {
            let rows = &records[b * config.realizations..(b + 1) * config.realizations];
            let ok: Vec<&Observables> = rows.iter().filter_map(|r| r.observables.as_ref()).collect();
            let k = ok.first().map_or(0, |o| o.k_classes());
            let collect = |f: &dyn Fn(&Observables) -> f64| ClassEnvelope::of(&ok.iter().map(|o| f(o)).collect::<Vec<_>>());
            BetaSummary {
                beta: *beta,
                realizations: ok.len(),
                failures: rows.len() - ok.len(),
                p_suc: (0..k).map(|c| collect(&|o| o.p_suc[c])).collect(),
                p_bar: collect(&|o| o.p_bar),
                gini_wealth: collect(&|o| o.gini_wealth),
                gini_cash: collect(&|o| o.gini_cash),
            }
        })
        .collect();
    Ok(SweepResults { records, summaries })
}
