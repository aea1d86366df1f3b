use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Economy, GoodsSpec};
use crate::error::{param, Error, Result};
use crate::rng::{self, Purpose, SimRng};

/// Allocation of goods among agents.
///
/// `owner` is the authoritative allocation (one entry per good); `holdings`
/// and `cash` are kept in step with it by every trade.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketState {
    pub(crate) wealth: Vec<i64>,
    pub(crate) cash: Vec<i64>,
    /// Row-major `N × K` counts `z_{i,k}`.
    pub(crate) holdings: Vec<u32>,
    /// Total goods held per agent.
    pub(crate) held: Vec<u32>,
    pub(crate) owner: Vec<u32>,
    /// Index of the first good of each class, then `M`.
    pub(crate) class_start: Vec<usize>,
    pub(crate) goods: GoodsSpec,
    /// Per-agent lists of owned goods, built on demand for subset rules.
    pub(crate) slots: Option<Slots>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Slots {
    pub(crate) lists: Vec<Vec<u32>>,
    pub(crate) pos: Vec<u32>,
}

impl MarketState {
    /// Builds a state from an explicit owner per good. Feasibility is not
    /// checked; see [`MarketState::is_feasible`].
    pub fn from_owners(economy: &Economy, owner: Vec<u32>) -> Result<Self> {
        let goods = economy.goods.clone();
        let n = economy.n_agents();
        let k = goods.k_classes();
        if owner.len() != goods.total_goods() {
            return Err(param(format!("{} owners for {} goods", owner.len(), goods.total_goods())));
        }
        if n > u32::MAX as usize || owner.iter().any(|o| *o as usize >= n) {
            return Err(param("owner index out of range"));
        }
        let class_of = goods.class_of_goods();
        let class_start = goods.counts.iter().fold(vec![0], |mut acc, m| {
            acc.push(acc[acc.len() - 1] + m);
            acc
        });
        let mut holdings = vec![0u32; n * k];
        let mut held = vec![0u32; n];
        let mut cash = economy.wealth.clone();
        for (m, o) in owner.iter().enumerate() {
            let o = *o as usize;
            let c = class_of[m] as usize;
            holdings[o * k + c] += 1;
            held[o] += 1;
            cash[o] -= goods.prices[c];
        }
        Ok(Self { wealth: economy.wealth.clone(), cash, holdings, held, owner, class_start, goods, slots: None })
    }

    /// Class of a good; goods are numbered class by class.
    #[inline]
    pub fn class_of(&self, good: usize) -> usize {
        self.class_start[1..].partition_point(|s| *s <= good)
    }

    pub fn n_agents(&self) -> usize {
        self.wealth.len()
    }

    pub fn goods(&self) -> &GoodsSpec {
        &self.goods
    }

    pub fn wealth(&self) -> &[i64] {
        &self.wealth
    }

    pub fn cash(&self) -> &[i64] {
        &self.cash
    }

    pub fn owners(&self) -> &[u32] {
        &self.owner
    }

    /// `z_{i,k}`.
    pub fn holding(&self, agent: usize, class: usize) -> u32 {
        self.holdings[agent * self.goods.k_classes() + class]
    }

    pub fn holdings_row(&self, agent: usize) -> &[u32] {
        let k = self.goods.k_classes();
        &self.holdings[agent * k..(agent + 1) * k]
    }

    /// Budget identity, non-negative cash, goods conservation and agreement
    /// of the count matrix with the per-good owners.
    pub fn is_feasible(&self) -> bool {
        let n = self.n_agents();
        let k = self.goods.k_classes();
        if self.cash.len() != n || self.holdings.len() != n * k || self.owner.len() != self.goods.total_goods() {
            return false;
        }
        let mut recount = vec![0u32; n * k];
        for (m, o) in self.owner.iter().enumerate() {
            let o = *o as usize;
            if o >= n {
                return false;
            }
            recount[o * k + self.class_of(m)] += 1;
        }
        if recount != self.holdings {
            return false;
        }
        for c in 0..k {
            let total: u64 = (0..n).map(|i| self.holdings[i * k + c] as u64).sum();
            if total != self.goods.counts[c] as u64 {
                return false;
            }
        }
        (0..n).all(|i| {
            let invested: i64 = self.holdings_row(i).iter().zip(&self.goods.prices).map(|(z, p)| *z as i64 * p).sum();
            let held: u32 = self.holdings_row(i).iter().sum();
            self.cash[i] >= 0 && invested + self.cash[i] == self.wealth[i] && held == self.held[i]
        })
    }

    pub(crate) fn ensure_slots(&mut self) {
        if self.slots.is_some() {
            return;
        }
        let mut lists = vec![Vec::new(); self.n_agents()];
        let mut pos = vec![0u32; self.owner.len()];
        for (m, o) in self.owner.iter().enumerate() {
            let list = &mut lists[*o as usize];
            pos[m] = list.len() as u32;
            list.push(m as u32);
        }
        self.slots = Some(Slots { lists, pos });
    }

    pub fn snapshot(&self, seed: u64, step: u64) -> MarketSnapshot {
        let k = self.goods.k_classes();
        MarketSnapshot {
            schema: SNAPSHOT_SCHEMA.to_string(),
            quantum: self.goods.quantum,
            prices: self.goods.prices.clone(),
            class_counts: self.goods.counts.clone(),
            wealth: self.wealth.clone(),
            holdings: self.holdings.chunks(k).map(|r| r.to_vec()).collect(),
            cash: self.cash.clone(),
            seed,
            step,
        }
    }

    /// Rebuilds a state from a snapshot. Goods of a class are handed to
    /// owners in agent order, which is equivalent for the dynamics since
    /// goods within a class are interchangeable. Cash is taken verbatim.
    pub fn from_snapshot(snap: &MarketSnapshot) -> Result<Self> {
        if snap.schema != SNAPSHOT_SCHEMA {
            return Err(param(format!("unknown snapshot schema {}", snap.schema)));
        }
        let goods = GoodsSpec::new(snap.prices.clone(), snap.class_counts.clone(), snap.quantum)?;
        let k = goods.k_classes();
        let n = snap.wealth.len();
        if snap.holdings.len() != n || snap.cash.len() != n || snap.holdings.iter().any(|r| r.len() != k) {
            return Err(param("snapshot arrays disagree in shape"));
        }
        let mut owner = Vec::with_capacity(goods.total_goods());
        for c in 0..k {
            let total: u64 = snap.holdings.iter().map(|r| r[c] as u64).sum();
            if total != goods.counts[c] as u64 {
                return Err(param(format!("class {} holds {} goods, expected {}", c + 1, total, goods.counts[c])));
            }
            for (i, row) in snap.holdings.iter().enumerate() {
                owner.extend(std::iter::repeat_n(i as u32, row[c] as usize));
            }
        }
        let economy = Economy {
            wealth: snap.wealth.clone(),
            wealth_money: snap.wealth.iter().map(|c| *c as f64 * snap.quantum).collect(),
            goods,
        };
        let mut state = Self::from_owners(&economy, owner)?;
        state.cash = snap.cash.clone();
        Ok(state)
    }
}

pub const SNAPSHOT_SCHEMA: &str = "market-snapshot/v1";

/// Checkpoint of a market. Money fields are in quanta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSnapshot {
    pub schema: String,
    pub quantum: f64,
    pub prices: Vec<i64>,
    pub class_counts: Vec<usize>,
    pub wealth: Vec<i64>,
    /// `holdings[i][k] = z_{i,k}`.
    pub holdings: Vec<Vec<u32>>,
    pub cash: Vec<i64>,
    pub seed: u64,
    pub step: u64,
}

const PLACEMENT_ATTEMPTS: u64 = 8;

/// Random greedy placement: classes from the most expensive down, each good
/// to a uniformly chosen agent whose remaining budget covers it.
pub fn initial_allocation(economy: &Economy, seed: u64) -> Result<MarketState> {
    if !economy.is_solvent() {
        return Err(Error::InfeasiblePacking(format!(
            "total value {} is not below total wealth {}",
            economy.goods.total_value(),
            economy.total_wealth()
        )));
    }
    for attempt in 0..PLACEMENT_ATTEMPTS {
        let mut rng = rng::stream(seed, Purpose::Allocation, attempt);
        if let Some(owner) = try_place(economy, &mut rng) {
            return MarketState::from_owners(economy, owner);
        }
    }
    Err(Error::InfeasiblePacking(format!("no placement found after {PLACEMENT_ATTEMPTS} attempts")))
}

fn try_place(economy: &Economy, rng: &mut SimRng) -> Option<Vec<u32>> {
    let goods = &economy.goods;
    let mut residual = economy.wealth.clone();
    let mut owner = vec![0u32; goods.total_goods()];
    let starts: Vec<usize> = goods
        .counts
        .iter()
        .scan(0usize, |acc, m| {
            let s = *acc;
            *acc += m;
            Some(s)
        })
        .collect();
    for c in (0..goods.k_classes()).rev() {
        let price = goods.prices[c];
        let mut eligible: Vec<u32> = (0..economy.n_agents() as u32).filter(|i| residual[*i as usize] >= price).collect();
        for m in starts[c]..starts[c] + goods.counts[c] {
            if eligible.is_empty() {
                return None;
            }
            let j = rng.random_range(0..eligible.len());
            let i = eligible[j] as usize;
            owner[m] = i as u32;
            residual[i] -= price;
            if residual[i] < price {
                eligible.swap_remove(j);
            }
        }
    }
    Some(owner)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Economy {
        Economy::from_quanta(vec![1, 2], vec![1], vec![2]).unwrap()
    }

    #[test]
    fn single_agent_owns_everything() {
        let e = Economy::from_quanta(vec![10], vec![2], vec![3]).unwrap();
        let s = initial_allocation(&e, 1).unwrap();
        assert_eq!(s.holding(0, 0), 3);
        assert_eq!(s.cash(), &[4]);
        assert!(s.is_feasible());
    }

    #[test]
    fn insolvent_economy_rejected_before_placement() {
        let e = Economy::from_quanta(vec![1, 1], vec![1], vec![3]).unwrap();
        assert!(matches!(initial_allocation(&e, 0), Err(Error::InfeasiblePacking(_))));
    }

    #[test]
    fn toy_allocation_is_one_of_three() {
        let e = toy();
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..64 {
            let s = initial_allocation(&e, seed).unwrap();
            assert!(s.is_feasible());
            seen.insert(s.owners().to_vec());
        }
        assert!(!seen.contains(&vec![0, 0]));
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn corrupted_cash_is_infeasible() {
        let mut s = initial_allocation(&toy(), 2).unwrap();
        assert!(s.is_feasible());
        s.cash[0] += 1;
        assert!(!s.is_feasible());
    }

    #[test]
    fn snapshot_roundtrip() {
        let e = Economy::from_quanta(vec![5, 7, 9], vec![1, 3], vec![4, 2]).unwrap();
        let s = initial_allocation(&e, 9).unwrap();
        let json = serde_json::to_string(&s.snapshot(9, 123)).unwrap();
        let snap: MarketSnapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(snap.step, 123);
        let r = MarketState::from_snapshot(&snap).unwrap();
        assert!(r.is_feasible());
        assert_eq!(r.cash(), s.cash());
        for i in 0..3 {
            assert_eq!(r.holdings_row(i), s.holdings_row(i));
        }
    }
}
