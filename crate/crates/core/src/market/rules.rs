use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::MarketState;
use crate::error::{param, Result};
use crate::rng::SimRng;

/// Symmetric trade rule `#n`.
///
/// `AllAgents` is rule `#N`: a good is picked uniformly among all goods and
/// offered to a uniformly chosen other agent. `Subset(n)` draws `n` distinct
/// agents, picks a good uniformly among those they hold together and offers
/// it to one of the other `n - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    #[default]
    AllAgents,
    Subset(usize),
}

impl Rule {
    /// Checks `2 ≤ n ≤ N`; `Subset(N)` is the same process as `AllAgents`.
    pub fn for_agents(self, n_agents: usize) -> Result<Rule> {
        match self {
            Rule::AllAgents => Ok(Rule::AllAgents),
            Rule::Subset(n) if n < 2 || n > n_agents => {
                Err(param(format!("rule #{n} needs 2 ≤ n ≤ N = {n_agents}")))
            }
            Rule::Subset(n) if n == n_agents => Ok(Rule::AllAgents),
            r => Ok(r),
        }
    }

    pub fn label(self) -> String {
        match self {
            Rule::AllAgents => "N".into(),
            Rule::Subset(n) => n.to_string(),
        }
    }
}

/// A proposed sale of one good.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Proposal {
    pub good: usize,
    pub class: usize,
    pub seller: usize,
    pub buyer: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeOutcome {
    pub class: usize,
    pub seller: usize,
    pub buyer: usize,
    pub success: bool,
}

impl MarketState {
    /// Draws a proposal; `None` is a no-op attempt (nothing to sell among the
    /// chosen agents, or a single-agent market).
    #[inline]
    pub fn propose(&mut self, rule: Rule, rng: &mut SimRng) -> Option<Proposal> {
        let n = self.wealth.len();
        if n < 2 || self.owner.is_empty() {
            return None;
        }
        match rule {
            Rule::AllAgents => {
                let good = rng.random_range(0..self.owner.len());
                let seller = self.owner[good] as usize;
                let mut buyer = rng.random_range(0..n - 1);
                if buyer >= seller {
                    buyer += 1;
                }
                Some(Proposal { good, class: self.class_of(good), seller, buyer })
            }
            Rule::Subset(size) => self.propose_subset(size, rng),
        }
    }

    fn propose_subset(&mut self, size: usize, rng: &mut SimRng) -> Option<Proposal> {
        self.ensure_slots();
        let n = self.wealth.len();
        let chosen: Vec<usize> = if size == 2 {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            vec![a, b]
        } else {
            index::sample(rng, n, size).into_vec()
        };
        let total: u64 = chosen.iter().map(|i| self.held[*i] as u64).sum();
        if total == 0 {
            return None;
        }
        let mut u = rng.random_range(0..total);
        let mut seller_pos = 0;
        for (j, i) in chosen.iter().enumerate() {
            let h = self.held[*i] as u64;
            if u < h {
                seller_pos = j;
                break;
            }
            u -= h;
        }
        let seller = chosen[seller_pos];
        let slots = self.slots.as_ref().expect("slots built above");
        let good = slots.lists[seller][u as usize] as usize;
        let mut b = rng.random_range(0..size - 1);
        if b >= seller_pos {
            b += 1;
        }
        Some(Proposal { good, class: self.class_of(good), seller, buyer: chosen[b] })
    }

    #[inline]
    pub fn affordable(&self, p: &Proposal) -> bool {
        self.cash[p.buyer] >= self.goods.prices[p.class]
    }

    /// Moves the good and its price. Callers check [`MarketState::affordable`].
    #[inline]
    pub fn execute(&mut self, p: &Proposal) {
        debug_assert!(self.affordable(p));
        debug_assert_eq!(self.owner[p.good] as usize, p.seller);
        let k = self.goods.prices.len();
        let price = self.goods.prices[p.class];
        self.owner[p.good] = p.buyer as u32;
        self.cash[p.buyer] -= price;
        self.cash[p.seller] += price;
        self.holdings[p.seller * k + p.class] -= 1;
        self.holdings[p.buyer * k + p.class] += 1;
        self.held[p.seller] -= 1;
        self.held[p.buyer] += 1;
        if let Some(slots) = self.slots.as_mut() {
            let at = slots.pos[p.good] as usize;
            let list = &mut slots.lists[p.seller];
            list.swap_remove(at);
            if at < list.len() {
                slots.pos[list[at] as usize] = at as u32;
            }
            let dest = &mut slots.lists[p.buyer];
            slots.pos[p.good] = dest.len() as u32;
            dest.push(p.good as u32);
        }
    }

    /// One attempted trade. `None` when the attempt had nothing to offer.
    pub fn trade_step(&mut self, rule: Rule, rng: &mut SimRng) -> Option<TradeOutcome> {
        let p = self.propose(rule, rng)?;
        let success = self.affordable(&p);
        if success {
            self.execute(&p);
        }
        Some(TradeOutcome { class: p.class, seller: p.seller, buyer: p.buyer, success })
    }
}
