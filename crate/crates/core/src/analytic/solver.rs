//! Self-consistent rates `p_k = 1 − (1/N) Σ_i P{z_{i,k} at cap}`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::lattice::{level_sums, LevelSums, DEFAULT_LATTICE_CAP};
use crate::error::{param, Error, Result};
use crate::market::{Economy, GoodsSpec};
use crate::wealth::StaircaseSpec;

/// Wealth levels on the quantum grid with their multiplicities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldProblem {
    /// Wealth per level, in quanta.
    pub levels: Vec<i64>,
    /// Agents per level.
    pub weights: Vec<f64>,
    /// Prices in quanta.
    pub prices: Vec<i64>,
    /// `M_k`.
    pub goods: Vec<f64>,
    pub quantum: f64,
}

impl MeanFieldProblem {
    pub fn new(levels: Vec<i64>, weights: Vec<f64>, prices: Vec<i64>, goods: Vec<f64>, quantum: f64) -> Result<Self> {
        if levels.is_empty() || levels.len() != weights.len() {
            return Err(param("levels and weights must be non-empty and of equal length"));
        }
        if levels.iter().any(|c| *c < 0) || weights.iter().any(|w| !(*w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(param("levels must be non-negative and weights positive"));
        }
        if prices.is_empty() || prices.len() != goods.len() {
            return Err(param("one goods count per price"));
        }
        if prices.iter().any(|p| *p <= 0) || goods.iter().any(|m| !(*m > 0.0)) {
            return Err(param("prices and goods counts must be positive"));
        }
        if !(quantum > 0.0) {
            return Err(param("quantum must be positive"));
        }
        Ok(Self { levels, weights, prices, goods, quantum })
    }

    /// Agents with equal wealth share a level.
    pub fn from_economy(economy: &Economy) -> Result<Self> {
        let mut groups: BTreeMap<i64, f64> = BTreeMap::new();
        for c in &economy.wealth {
            *groups.entry(*c).or_default() += 1.0;
        }
        let goods = &economy.goods;
        Self::new(
            groups.keys().copied().collect(),
            groups.values().copied().collect(),
            goods.prices.clone(),
            goods.counts.iter().map(|m| *m as f64).collect(),
            goods.quantum,
        )
    }

    pub fn from_staircase(staircase: &StaircaseSpec, goods: &GoodsSpec) -> Result<Self> {
        let (levels, weights) = staircase
            .levels
            .iter()
            .zip(&staircase.counts)
            .filter(|(_, n)| **n > 0)
            .map(|(c, n)| ((c / goods.quantum).floor() as i64, *n as f64))
            .unzip();
        Self::new(levels, weights, goods.prices.clone(), goods.counts.iter().map(|m| *m as f64).collect(), goods.quantum)
    }

    pub fn k_classes(&self) -> usize {
        self.prices.len()
    }

    pub fn n_agents(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn lambda(&self, p: &[f64]) -> Vec<f64> {
        let n = self.n_agents();
        self.goods.iter().zip(p).map(|(m, p)| m / (n * p)).collect()
    }

    fn sums(&self, p: &[f64], cap: usize) -> Result<Vec<LevelSums>> {
        let lambda = self.lambda(p);
        self.levels.iter().map(|c| level_sums(*c, &self.prices, &lambda, cap)).collect()
    }
}

/// Right-hand side of the self-consistency equations at rates `p`.
pub fn target_rates(problem: &MeanFieldProblem, p: &[f64], lattice_cap: usize) -> Result<Vec<f64>> {
    if p.len() != problem.k_classes() || p.iter().any(|x| !(*x > 0.0 && *x <= 1.0)) {
        return Err(param("rates must lie in (0, 1], one per class"));
    }
    let sums = problem.sums(p, lattice_cap)?;
    Ok(targets_from(problem, &sums))
}

fn targets_from(problem: &MeanFieldProblem, sums: &[LevelSums]) -> Vec<f64> {
    let n = problem.n_agents();
    (0..problem.k_classes())
        .map(|k| {
            let open: f64 = sums.iter().zip(&problem.weights).map(|(s, w)| w * s.open(k)).sum();
            open / n
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    Bisection,
    StepHalving,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfConsistentSolution {
    pub method: SolverMethod,
    pub lambda: Vec<f64>,
    pub p_suc: Vec<f64>,
    /// `c⁽ᵏ⁾ = λ_k π_k` in money units.
    pub thresholds: Vec<f64>,
    /// Level wealth in money units.
    pub level_wealth: Vec<f64>,
    pub level_weights: Vec<f64>,
    /// `ln Z(c_g)`.
    pub log_normalizers: Vec<f64>,
    /// `|p_k − target_k|` at the returned rates.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub tolerance: f64,
}

impl SelfConsistentSolution {
    fn assemble(
        problem: &MeanFieldProblem,
        p: Vec<f64>,
        method: SolverMethod,
        iterations: usize,
        tolerance: f64,
        cap: usize,
        converged: bool,
    ) -> Result<Self> {
        let sums = problem.sums(&p, cap)?;
        let targets = targets_from(problem, &sums);
        let lambda = problem.lambda(&p);
        let residuals: Vec<f64> = p.iter().zip(&targets).map(|(a, b)| (a - b).abs()).collect();
        Ok(Self {
            method,
            thresholds: lambda.iter().zip(&problem.prices).map(|(l, pr)| l * *pr as f64 * problem.quantum).collect(),
            lambda,
            level_wealth: problem.levels.iter().map(|c| *c as f64 * problem.quantum).collect(),
            level_weights: problem.weights.clone(),
            log_normalizers: sums.iter().map(|s| s.log_z).collect(),
            converged: converged && residuals.iter().all(|r| *r < tolerance),
            residuals,
            p_suc: p,
            iterations,
            tolerance,
        })
    }
}

/// Scalar root of `p = target(p)` for one class, by bisection in `ln p`.
pub fn solve_single_class(problem: &MeanFieldProblem, tolerance: f64) -> Result<SelfConsistentSolution> {
    if problem.k_classes() != 1 {
        return Err(param("single-class solver needs K = 1"));
    }
    if !(tolerance > 0.0) {
        return Err(param("tolerance must be positive"));
    }
    let cap = DEFAULT_LATTICE_CAP;
    let f = |p: f64| -> Result<f64> { Ok(p - target_rates(problem, &[p], cap)?[0]) };
    let build = |p: f64, it: usize| SelfConsistentSolution::assemble(problem, vec![p], SolverMethod::Bisection, it, tolerance, cap, true);
    if f(1.0)? <= 0.0 {
        return build(1.0, 1);
    }
    let mut lo = 1e-15;
    if f(lo)? >= 0.0 {
        return Err(Error::NoRoot(
            "no fixed point in (0, 1]: buyers are saturated at every rate, p_suc -> 0".into(),
        ));
    }
    let mut hi = 1.0;
    let mut it = 2;
    while hi - lo > (1e-3 * tolerance).max(4.0 * f64::EPSILON * hi) && it < 2000 {
        let mid = if hi < 2.0 * lo { 0.5 * (lo + hi) } else { (lo * hi).sqrt() };
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        it += 1;
    }
    build(0.5 * (lo + hi), it)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepHalvingOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub lattice_cap: usize,
    pub initial_p: f64,
    pub initial_step: f64,
}

impl Default for StepHalvingOptions {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iterations: 100_000, lattice_cap: DEFAULT_LATTICE_CAP, initial_p: 0.5, initial_step: 0.1 }
    }
}

/// Step-halving iteration on every `p_k` at once. Each step moves `p_k` by
/// `Δ_k`; an overshoot flips and halves `Δ_k`. Stops once every `|Δ_k|` is
/// below the tolerance, or returns the last iterate unconverged at the cap.
pub fn solve_multi_class_fixed_point(problem: &MeanFieldProblem, options: &StepHalvingOptions) -> Result<SelfConsistentSolution> {
    if !(options.tolerance > 0.0) || !(options.initial_p > 0.0 && options.initial_p <= 1.0) || !(options.initial_step > 0.0) {
        return Err(param("invalid step-halving options"));
    }
    let k = problem.k_classes();
    let mut p = vec![options.initial_p; k];
    let mut step = vec![options.initial_step; k];
    let mut it = 0;
    while it < options.max_iterations && step.iter().any(|d| d.abs() >= options.tolerance) {
        let goal = target_rates(problem, &p, options.lattice_cap)?;
        for c in 0..k {
            if (goal[c] - p[c]) * step[c] < 0.0 {
                step[c] = -step[c] / 2.0;
            }
            p[c] += step[c];
            if p[c] <= 0.0 {
                p[c] = step[c].abs();
                step[c] /= 2.0;
            }
            if p[c] > 1.0 {
                p[c] = 1.0;
            }
        }
        it += 1;
    }
    let done = step.iter().all(|d| d.abs() < options.tolerance);
    SelfConsistentSolution::assemble(problem, p, SolverMethod::StepHalving, it, options.tolerance, options.lattice_cap, done)
}

/// `E[z_k]` per level and class.
pub fn mean_holdings(problem: &MeanFieldProblem, solution: &SelfConsistentSolution) -> Result<Vec<Vec<f64>>> {
    let sums = problem.sums(&solution.p_suc, DEFAULT_LATTICE_CAP)?;
    Ok(sums.iter().map(|s| (0..problem.k_classes()).map(|k| s.mean(k)).collect()).collect())
}

/// `P{z_k at its cap}` per level and class.
pub fn threshold_probability(problem: &MeanFieldProblem, solution: &SelfConsistentSolution) -> Result<Vec<Vec<f64>>> {
    let sums = problem.sums(&solution.p_suc, DEFAULT_LATTICE_CAP)?;
    Ok(sums.iter().map(|s| (0..problem.k_classes()).map(|k| s.saturation(k)).collect()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(m: i64, n: f64, goods: f64) -> MeanFieldProblem {
        MeanFieldProblem::new(vec![m], vec![n], vec![1], vec![goods], 1.0).unwrap()
    }

    #[test]
    fn half_filled_unit_caps() {
        // m = 1, M/N = 0.5: p (1 + 0.5/p) = 1
        let s = solve_single_class(&uniform(1, 100.0, 50.0), 1e-12).unwrap();
        assert!((s.p_suc[0] - 0.5).abs() < 1e-10);
        assert!((s.lambda[0] - 1.0).abs() < 1e-9);
        assert!(s.converged);
    }

    #[test]
    fn zero_caps_have_no_root() {
        let p = MeanFieldProblem::new(vec![0], vec![10.0], vec![1], vec![1.0], 1.0).unwrap();
        assert!(matches!(solve_single_class(&p, 1e-9), Err(Error::NoRoot(_))));
    }

    #[test]
    fn step_halving_agrees_with_bisection() {
        let p = MeanFieldProblem::new(vec![1, 3, 8, 40], vec![50.0, 30.0, 15.0, 5.0], vec![1], vec![180.0], 1.0).unwrap();
        let a = solve_single_class(&p, 1e-12).unwrap();
        let b = solve_multi_class_fixed_point(&p, &StepHalvingOptions { tolerance: 1e-12, ..Default::default() }).unwrap();
        assert!(b.converged, "{b:?}");
        assert!((a.p_suc[0] - b.p_suc[0]).abs() < 1e-9, "{} vs {}", a.p_suc[0], b.p_suc[0]);
    }

    #[test]
    fn two_class_fixed_point() {
        let p = MeanFieldProblem::new(vec![4, 6, 9, 20], vec![40.0, 30.0, 20.0, 10.0], vec![2, 3], vec![60.0, 40.0], 1.0).unwrap();
        let s = solve_multi_class_fixed_point(&p, &StepHalvingOptions::default()).unwrap();
        assert!(s.converged);
        let t = target_rates(&p, &s.p_suc, 1000).unwrap();
        for k in 0..2 {
            assert!((t[k] - s.p_suc[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn goods_are_conserved_on_average() {
        let p = MeanFieldProblem::new(vec![2, 5, 11, 30], vec![40.0, 30.0, 20.0, 10.0], vec![1], vec![300.0], 1.0).unwrap();
        let s = solve_single_class(&p, 1e-13).unwrap();
        let m = mean_holdings(&p, &s).unwrap();
        let total: f64 = m.iter().zip(&p.weights).map(|(z, w)| z[0] * w).sum();
        assert!((total - 300.0).abs() < 1e-8, "{total}");
    }
}
