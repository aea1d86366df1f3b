//! Exact enumeration of tiny economies.
//!
//! Goods are distinguishable here, as they are in the dynamics: an
//! allocation is the owner of every good, and the kernel moves one good at a
//! time.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{Economy, Rule};
use crate::error::{Error, Result};

/// Owner of each good.
pub type Allocation = Vec<u32>;

pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// Every owner vector with non-negative cash for all agents.
///
/// Fails when the number of conceivable allocations `N^M` exceeds `cap`.
pub fn enumerate_feasible_allocations(economy: &Economy, cap: u64) -> Result<Vec<Allocation>> {
    let n = economy.n_agents() as u64;
    let m = economy.goods.total_goods();
    let conceivable = u32::try_from(m).ok().and_then(|m| n.checked_pow(m));
    match conceivable {
        Some(c) if c <= cap => {}
        _ => {
            return Err(Error::OracleScale(format!(
                "{n}^{m} conceivable allocations exceed the cap {cap}"
            )))
        }
    }
    let class_of = economy.goods.class_of_goods();
    let prices: Vec<i64> = class_of.iter().map(|c| economy.goods.prices[*c as usize]).collect();
    let mut out = Vec::new();
    let mut current = vec![0u32; m];
    let mut residual = economy.wealth.clone();
    place(0, &prices, &mut current, &mut residual, &mut out);
    Ok(out)
}

fn place(good: usize, prices: &[i64], current: &mut Vec<u32>, residual: &mut [i64], out: &mut Vec<Allocation>) {
    if good == prices.len() {
        out.push(current.clone());
        return;
    }
    for i in 0..residual.len() {
        if residual[i] >= prices[good] {
            residual[i] -= prices[good];
            current[good] = i as u32;
            place(good + 1, prices, current, residual, out);
            residual[i] += prices[good];
        }
    }
}

/// One possible move: `good` offered to `buyer` with probability `prob`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveProposal {
    pub good: usize,
    pub buyer: usize,
    pub prob: f64,
}

/// Single-step proposal law of a trade rule, from a given allocation.
///
/// The move is accepted when the buyer can afford the good; the remaining
/// probability mass is a no-op.
pub trait MoveKernel {
    fn proposals(&self, economy: &Economy, owners: &[u32], out: &mut Vec<MoveProposal>);
}

impl MoveKernel for Rule {
    fn proposals(&self, economy: &Economy, owners: &[u32], out: &mut Vec<MoveProposal>) {
        out.clear();
        let n = economy.n_agents();
        let m = owners.len();
        if n < 2 || m == 0 {
            return;
        }
        match self.for_agents(n) {
            Ok(Rule::AllAgents) => {
                let prob = 1.0 / (m as f64 * (n - 1) as f64);
                for (good, o) in owners.iter().enumerate() {
                    out.extend((0..n).filter(|b| *b != *o as usize).map(|buyer| MoveProposal { good, buyer, prob }));
                }
            }
            Ok(Rule::Subset(size)) => {
                let mut held = vec![0usize; n];
                for o in owners {
                    held[*o as usize] += 1;
                }
                let subsets = combinations(n, size);
                let p_subset = 1.0 / subsets.len() as f64;
                let mut acc: HashMap<(usize, usize), f64> = HashMap::new();
                let mut member = vec![false; n];
                for s in &subsets {
                    let total: usize = s.iter().map(|i| held[*i]).sum();
                    if total == 0 {
                        continue;
                    }
                    s.iter().for_each(|i| member[*i] = true);
                    let prob = p_subset / total as f64 / (size - 1) as f64;
                    for (good, o) in owners.iter().enumerate() {
                        let o = *o as usize;
                        if !member[o] {
                            continue;
                        }
                        for b in s.iter().filter(|b| **b != o) {
                            *acc.entry((good, *b)).or_default() += prob;
                        }
                    }
                    s.iter().for_each(|i| member[*i] = false);
                }
                let mut moves: Vec<_> = acc.into_iter().collect();
                moves.sort_by_key(|(key, _)| *key);
                out.extend(moves.into_iter().map(|((good, buyer), prob)| MoveProposal { good, buyer, prob }));
            }
            Err(_) => {}
        }
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Transition kernel over the feasible allocations of a tiny economy.
#[derive(Debug, Clone)]
pub struct ExactKernel {
    pub states: Vec<Allocation>,
    index: HashMap<Allocation, usize>,
    /// Accepted moves out of each state, `(target, probability)`.
    moves: Vec<Vec<(usize, f64)>>,
    /// Probability that a class-`k` good is offered, per state.
    offered: Vec<Vec<f64>>,
    /// Probability that a class-`k` good is offered and sold, per state.
    sold: Vec<Vec<f64>>,
}

impl ExactKernel {
    pub fn build(economy: &Economy, rule: &impl MoveKernel, cap: u64) -> Result<Self> {
        let states = enumerate_feasible_allocations(economy, cap)?;
        let index: HashMap<Allocation, usize> = states.iter().cloned().enumerate().map(|(i, a)| (a, i)).collect();
        let class_of = economy.goods.class_of_goods();
        let k = economy.goods.k_classes();
        let mut moves = Vec::with_capacity(states.len());
        let mut offered = Vec::with_capacity(states.len());
        let mut sold = Vec::with_capacity(states.len());
        let mut props = Vec::new();
        for a in &states {
            let mut cash = economy.wealth.clone();
            for (g, o) in a.iter().enumerate() {
                cash[*o as usize] -= economy.goods.prices[class_of[g] as usize];
            }
            rule.proposals(economy, a, &mut props);
            let mut out = Vec::new();
            let mut off = vec![0.0; k];
            let mut ok = vec![0.0; k];
            let mut next = a.clone();
            for p in &props {
                let c = class_of[p.good] as usize;
                off[c] += p.prob;
                if cash[p.buyer] >= economy.goods.prices[c] {
                    ok[c] += p.prob;
                    next[p.good] = p.buyer as u32;
                    let j = index[&next];
                    next[p.good] = a[p.good];
                    out.push((j, p.prob));
                }
            }
            moves.push(out);
            offered.push(off);
            sold.push(ok);
        }
        Ok(Self { states, index, moves, offered, sold })
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, allocation: &[u32]) -> Option<usize> {
        self.index.get(allocation).copied()
    }

    /// `W(A → A')` for `A ≠ A'`.
    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.moves[from].iter().filter(|(j, _)| *j == to).map(|(_, p)| p).sum()
    }

    /// Largest `|W(A → A') - W(A' → A)|` over pairs joined by a move.
    pub fn max_rate_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, out) in self.moves.iter().enumerate() {
            for (j, _) in out {
                worst = worst.max((self.rate(i, *j) - self.rate(*j, i)).abs());
            }
        }
        worst
    }

    /// Largest entry of `u W - u` for the uniform vector `u`.
    pub fn uniform_residual(&self) -> f64 {
        let s = self.n_states();
        if s == 0 {
            return 0.0;
        }
        let mut inflow = vec![0.0; s];
        let mut outflow = vec![0.0; s];
        for (i, out) in self.moves.iter().enumerate() {
            for (j, p) in out {
                inflow[*j] += p;
                outflow[i] += p;
            }
        }
        inflow.iter().zip(&outflow).map(|(a, b)| ((a - b) / s as f64).abs()).fold(0.0, f64::max)
    }

    /// Every state reaches every other.
    pub fn is_irreducible(&self) -> bool {
        let s = self.n_states();
        if s <= 1 {
            return true;
        }
        let mut reverse = vec![Vec::new(); s];
        for (i, out) in self.moves.iter().enumerate() {
            for (j, _) in out {
                reverse[*j].push(i);
            }
        }
        let forward: Vec<Vec<usize>> = self.moves.iter().map(|o| o.iter().map(|(j, _)| *j).collect()).collect();
        reaches_all(&forward) && reaches_all(&reverse)
    }

    /// No state has an accepted move.
    pub fn is_frozen(&self) -> bool {
        self.moves.iter().all(|m| m.is_empty())
    }

    /// Probability of a successful trade from each state, all classes.
    pub fn success_probability(&self, state: usize) -> f64 {
        self.sold[state].iter().sum()
    }

    /// Per-class success rate under the state weights `w`: offered-and-sold
    /// mass over offered mass. NaN for a class that is never offered.
    pub fn success_rates(&self, w: &[f64]) -> Vec<f64> {
        let k = self.offered.first().map_or(0, |o| o.len());
        (0..k)
            .map(|c| {
                let off: f64 = w.iter().zip(&self.offered).map(|(p, o)| p * o[c]).sum();
                let ok: f64 = w.iter().zip(&self.sold).map(|(p, o)| p * o[c]).sum();
                if off > 0.0 {
                    ok / off
                } else {
                    f64::NAN
                }
            })
            .collect()
    }

    pub fn uniform(&self) -> Vec<f64> {
        vec![1.0 / self.n_states() as f64; self.n_states()]
    }

    /// Total-variation distance to uniform after `steps` steps from `start`,
    /// by direct propagation of the kernel.
    pub fn distance_to_uniform(&self, start: usize, steps: usize) -> f64 {
        let s = self.n_states();
        let mut p = vec![0.0; s];
        p[start] = 1.0;
        for _ in 0..steps {
            let mut next = p.clone();
            for (i, out) in self.moves.iter().enumerate() {
                for (j, w) in out {
                    next[i] -= p[i] * w;
                    next[*j] += p[i] * w;
                }
            }
            p = next;
        }
        0.5 * p.iter().map(|x| (x - 1.0 / s as f64).abs()).sum::<f64>()
    }
}

fn reaches_all(adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for j in &adj[i] {
            if !seen[*j] {
                seen[*j] = true;
                queue.push_back(*j);
            }
        }
    }
    seen.into_iter().all(|x| x)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExactStationary {
    pub n_states: usize,
    /// Per-class success rate of a uniformly picked good offered to a
    /// uniformly picked non-owner, under the stationary law (null if the
    /// class has no goods). Independent of the rule.
    pub p_suc: Vec<f64>,
    /// Per-class fraction of the rule's own attempts that succeed.
    pub attempt_p_suc: Vec<f64>,
    pub uniform_residual: f64,
    pub max_rate_asymmetry: f64,
    /// False only for frozen economies, where no trade ever succeeds.
    pub ergodic: bool,
    pub states: Vec<Allocation>,
}

const STATIONARITY_TOLERANCE: f64 = 1e-12;

/// Per-class success rates averaged over the uniform law on feasible
/// allocations, after checking that the uniform law is stationary under
/// `rule`.
pub fn exact_stationary_success_rates(economy: &Economy, rule: Rule, cap: u64) -> Result<ExactStationary> {
    let rule = rule.for_agents(economy.n_agents().max(2))?;
    let kernel = ExactKernel::build(economy, &rule, cap)?;
    if kernel.n_states() == 0 {
        return Err(Error::Degenerate("economy has no feasible allocation".into()));
    }
    let ergodic = kernel.is_irreducible();
    if !ergodic && !kernel.is_frozen() {
        return Err(Error::NonErgodic(format!("{} feasible states split into several classes", kernel.n_states())));
    }
    let residual = kernel.uniform_residual();
    if residual > STATIONARITY_TOLERANCE {
        return Err(Error::Unsupported(format!("uniform law not stationary (residual {residual:e})")));
    }
    let attempt_p_suc = kernel.success_rates(&kernel.uniform());
    let p_suc = if rule == Rule::AllAgents {
        attempt_p_suc.clone()
    } else {
        ExactKernel::build(economy, &Rule::AllAgents, cap)?.success_rates(&kernel.uniform())
    };
    Ok(ExactStationary {
        n_states: kernel.n_states(),
        p_suc,
        attempt_p_suc,
        uniform_residual: residual,
        max_rate_asymmetry: kernel.max_rate_asymmetry(),
        ergodic,
        states: kernel.states.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Economy {
        Economy::from_quanta(vec![1, 2], vec![1], vec![2]).unwrap()
    }

    #[test]
    fn toy_has_three_feasible_states() {
        let states = enumerate_feasible_allocations(&toy(), DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(states.len(), 3);
        assert!(!states.contains(&vec![0, 0]));
    }

    #[test]
    fn enumeration_edge_cases() {
        let e = Economy::from_quanta(vec![1, 2], vec![1], vec![0]).unwrap();
        assert_eq!(enumerate_feasible_allocations(&e, 10).unwrap(), vec![Vec::<u32>::new()]);
        let e = Economy::from_quanta(vec![3], vec![1], vec![2]).unwrap();
        assert_eq!(enumerate_feasible_allocations(&e, 10).unwrap().len(), 1);
        let e = Economy::from_quanta(vec![1], vec![1], vec![2]).unwrap();
        assert_eq!(enumerate_feasible_allocations(&e, 10).unwrap().len(), 0);
        let e = Economy::from_quanta(vec![10; 4], vec![1], vec![12]).unwrap();
        assert!(matches!(enumerate_feasible_allocations(&e, 1_000_000), Err(Error::OracleScale(_))));
    }

    #[test]
    fn toy_success_rate_is_two_thirds() {
        let r = exact_stationary_success_rates(&toy(), Rule::AllAgents, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(r.n_states, 3);
        assert!((r.p_suc[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!(r.uniform_residual < 1e-15);
    }

    #[test]
    fn per_state_success_probabilities() {
        let k = ExactKernel::build(&toy(), &Rule::AllAgents, DEFAULT_ENUMERATION_CAP).unwrap();
        let mut p: Vec<f64> = (0..3).map(|i| k.success_probability(i)).collect();
        p.sort_by(f64::total_cmp);
        assert_eq!(p, vec![0.5, 0.5, 1.0]);
    }

    #[test]
    fn always_liquid_and_frozen_economies() {
        let e = Economy::from_quanta(vec![3, 3], vec![1], vec![1]).unwrap();
        let r = exact_stationary_success_rates(&e, Rule::AllAgents, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(r.p_suc, vec![1.0]);
        let e = Economy::from_quanta(vec![1, 1], vec![1], vec![2]).unwrap();
        let r = exact_stationary_success_rates(&e, Rule::AllAgents, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(r.p_suc, vec![0.0]);
        assert!(!r.ergodic);
    }

    #[test]
    fn subset_rule_probabilities_are_normalized() {
        let e = Economy::from_quanta(vec![3, 2, 4], vec![1, 2], vec![2, 1]).unwrap();
        let states = enumerate_feasible_allocations(&e, DEFAULT_ENUMERATION_CAP).unwrap();
        let mut out = Vec::new();
        for a in &states {
            Rule::Subset(2).proposals(&e, a, &mut out);
            let total: f64 = out.iter().map(|p| p.prob).sum();
            // the only no-op is a pair holding nothing
            assert!(total <= 1.0 + 1e-15);
            Rule::AllAgents.proposals(&e, a, &mut out);
            let total: f64 = out.iter().map(|p| p.prob).sum();
            assert!((total - 1.0).abs() < 1e-14);
        }
    }
}
