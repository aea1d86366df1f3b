//! Fast burn-in moves.
//!
//! A good is drawn uniformly and sold to an agent drawn uniformly among the
//! other agents that can pay for it. The number of such buyers is the same
//! before and after the move, so the rates are symmetric and the uniform
//! law over feasible allocations stays stationary. Every move with at least
//! one eligible buyer succeeds, which makes this far quicker than rule `#N`
//! when liquidity is low.

use rand::Rng;

use super::oracle::{MoveKernel, MoveProposal};
use super::{Economy, MarketState, Proposal};
use crate::rng::SimRng;

const ABSENT: u32 = u32::MAX;

/// Agents whose cash covers each class price.
#[derive(Debug, Clone)]
pub struct BuyerIndex {
    members: Vec<Vec<u32>>,
    pos: Vec<u32>,
    k: usize,
}

impl BuyerIndex {
    pub fn new(state: &MarketState) -> Self {
        let k = state.goods.k_classes();
        let n = state.n_agents();
        let mut index = Self { members: vec![Vec::new(); k], pos: vec![ABSENT; n * k], k };
        for i in 0..n {
            index.refresh(state, i);
        }
        index
    }

    pub fn count(&self, class: usize) -> usize {
        self.members[class].len()
    }

    fn refresh(&mut self, state: &MarketState, agent: usize) {
        self.refresh_classes(state, agent, 0..self.k);
    }

    /// Only classes priced within `(lo, hi]` can change membership when cash
    /// moves between `lo` and `hi`.
    fn refresh_between(&mut self, state: &MarketState, agent: usize, lo: i64, hi: i64) {
        let prices = &state.goods.prices;
        let from = prices.partition_point(|p| *p <= lo);
        let to = prices.partition_point(|p| *p <= hi);
        self.refresh_classes(state, agent, from..to);
    }

    fn refresh_classes(&mut self, state: &MarketState, agent: usize, classes: std::ops::Range<usize>) {
        let cash = state.cash[agent];
        for c in classes {
            let inside = cash >= state.goods.prices[c];
            let at = self.pos[agent * self.k + c];
            if inside && at == ABSENT {
                self.pos[agent * self.k + c] = self.members[c].len() as u32;
                self.members[c].push(agent as u32);
            } else if !inside && at != ABSENT {
                let list = &mut self.members[c];
                list.swap_remove(at as usize);
                if (at as usize) < list.len() {
                    self.pos[list[at as usize] as usize * self.k + c] = at;
                }
                self.pos[agent * self.k + c] = ABSENT;
            }
        }
    }

    /// One fast move; `false` if nobody else could pay.
    pub fn step(&mut self, state: &mut MarketState, rng: &mut SimRng) -> bool {
        if state.owner.is_empty() {
            return false;
        }
        let good = rng.random_range(0..state.owner.len());
        let class = state.class_of(good);
        let seller = state.owner[good] as usize;
        let list = &self.members[class];
        let own = self.pos[seller * self.k + class];
        let eligible = list.len() - usize::from(own != ABSENT);
        if eligible == 0 {
            return false;
        }
        let mut j = rng.random_range(0..eligible);
        if own != ABSENT && j >= own as usize {
            j += 1;
        }
        let buyer = list[j] as usize;
        let price = state.goods.prices[class];
        let before = state.cash[seller];
        state.execute(&Proposal { good, class, seller, buyer });
        self.refresh_between(state, seller, before, before + price);
        let after = state.cash[buyer];
        self.refresh_between(state, buyer, after, after + price);
        true
    }
}

/// Runs `moves` fast moves and returns how many changed the state.
pub fn accelerated_burn_in(state: &mut MarketState, moves: u64, rng: &mut SimRng) -> u64 {
    let mut index = BuyerIndex::new(state);
    (0..moves).filter(|_| index.step(state, rng)).count() as u64
}

/// The fast move as an exact kernel, for the enumeration oracle.
#[derive(Debug, Clone, Copy, Default)]
pub struct FastMoves;

impl MoveKernel for FastMoves {
    fn proposals(&self, economy: &Economy, owners: &[u32], out: &mut Vec<MoveProposal>) {
        out.clear();
        let m = owners.len();
        let class_of = economy.goods.class_of_goods();
        let mut cash = economy.wealth.clone();
        for (g, o) in owners.iter().enumerate() {
            cash[*o as usize] -= economy.goods.prices[class_of[g] as usize];
        }
        for (good, o) in owners.iter().enumerate() {
            let price = economy.goods.prices[class_of[good] as usize];
            let buyers: Vec<usize> = (0..cash.len()).filter(|b| *b != *o as usize && cash[*b] >= price).collect();
            let prob = 1.0 / (m as f64 * buyers.len() as f64);
            out.extend(buyers.into_iter().map(|buyer| MoveProposal { good, buyer, prob }));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{exact_stationary_success_rates, initial_allocation, ExactKernel, Rule};
    use crate::rng;

    #[test]
    fn uniform_law_is_stationary() {
        for (w, p, c) in [
            (vec![1, 2], vec![1], vec![2]),
            (vec![3, 5, 8], vec![2, 3], vec![3, 1]),
            (vec![2, 2, 4, 7], vec![1, 2], vec![3, 2]),
        ] {
            let e = Economy::from_quanta(w, p, c).unwrap();
            let k = ExactKernel::build(&e, &FastMoves, 1_000_000).unwrap();
            assert!(k.uniform_residual() < 1e-12);
            assert!(k.max_rate_asymmetry() < 1e-15);
            assert!(k.is_irreducible());
        }
    }

    #[test]
    fn index_tracks_cash() {
        let e = Economy::from_quanta(vec![40, 55, 90, 12, 7], vec![2, 3, 7], vec![10, 6, 3]).unwrap();
        let mut s = initial_allocation(&e, 3).unwrap();
        let mut r = rng::seeded(9);
        let mut index = BuyerIndex::new(&s);
        for _ in 0..5000 {
            index.step(&mut s, &mut r);
            assert!(s.is_feasible());
        }
        let fresh = BuyerIndex::new(&s);
        for c in 0..3 {
            assert_eq!(index.count(c), fresh.count(c));
            let expect = s.cash().iter().filter(|x| **x >= e.goods.prices[c]).count();
            assert_eq!(index.count(c), expect);
        }
    }

    #[test]
    fn same_stationary_rates_as_rule_n() {
        // the fast moves only reach the uniform law; rates are still those of #N
        let e = Economy::from_quanta(vec![1, 2], vec![1], vec![2]).unwrap();
        let exact = exact_stationary_success_rates(&e, Rule::AllAgents, 1_000).unwrap();
        let k = ExactKernel::build(&e, &FastMoves, 1_000).unwrap();
        let d = k.distance_to_uniform(0, 200);
        assert!(d < 1e-12, "{d}");
        assert!((exact.p_suc[0] - 2.0 / 3.0).abs() < 1e-12);
    }
}
