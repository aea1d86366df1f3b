//! Goods, allocations and the trading dynamics.
//!
//! Money is held as integer multiples of a quantum `q` chosen so every price
//! on the ladder `π_k = π_1 g^(k-1)` is an exact integer. Wealth is floored to
//! quanta. Because `q` divides every price, affordability of every purchase
//! is unchanged by the flooring, and conservation holds exactly.

mod mixing;
mod oracle;
mod rules;
mod state;

pub use oracle::{
    enumerate_feasible_allocations, exact_stationary_success_rates, Allocation, ExactKernel, ExactStationary,
    MoveKernel, MoveProposal, DEFAULT_ENUMERATION_CAP,
};
pub use mixing::{accelerated_burn_in, BuyerIndex, FastMoves};
pub use rules::{Proposal, Rule, TradeOutcome};
pub use state::{initial_allocation, MarketSnapshot, MarketState, SNAPSHOT_SCHEMA};

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::numeric;
use crate::wealth::WealthVector;

/// `K` price classes with integer prices (in quanta) and goods counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodsSpec {
    /// Price of each class in quanta, strictly increasing.
    pub prices: Vec<i64>,
    /// Number of goods `M_k` per class.
    pub counts: Vec<usize>,
    /// Money units per quantum.
    pub quantum: f64,
}

impl GoodsSpec {
    pub fn new(prices: Vec<i64>, counts: Vec<usize>, quantum: f64) -> Result<Self> {
        if prices.is_empty() || prices.len() != counts.len() {
            return Err(param("goods need one count per price class and at least one class"));
        }
        if prices[0] <= 0 || prices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(param(format!("prices must be positive and strictly increasing: {prices:?}")));
        }
        if !(quantum > 0.0) || !quantum.is_finite() {
            return Err(param(format!("quantum must be positive, got {quantum}")));
        }
        if prices.len() > u16::MAX as usize {
            return Err(param("too many price classes"));
        }
        Ok(Self { prices, counts, quantum })
    }

    pub fn k_classes(&self) -> usize {
        self.prices.len()
    }

    pub fn total_goods(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Total value `Π` in quanta.
    pub fn total_value(&self) -> i64 {
        self.prices.iter().zip(&self.counts).map(|(p, m)| p * *m as i64).sum()
    }

    pub fn price(&self, k: usize) -> f64 {
        self.prices[k] as f64 * self.quantum
    }

    pub fn total_value_money(&self) -> f64 {
        self.total_value() as f64 * self.quantum
    }

    /// Class of each good, goods being numbered class by class.
    pub fn class_of_goods(&self) -> Vec<u16> {
        self.counts
            .iter()
            .enumerate()
            .flat_map(|(k, m)| std::iter::repeat_n(k as u16, *m))
            .collect()
    }
}

/// Price ladder `π_k = π_1 g^(k-1)` on an integer grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceLadder {
    pub quantum: f64,
    pub prices: Vec<i64>,
}

/// Writes `g` as a reduced fraction with denominator at most 1024.
pub fn rationalize(g: f64) -> Result<(i64, i64)> {
    for den in 1i64..=1024 {
        let num = (g * den as f64).round();
        if (num - g * den as f64).abs() < 1e-9 * den as f64 {
            let num = num as i64;
            let d = gcd(num, den);
            return Ok((num / d, den / d));
        }
    }
    Err(param(format!("price ratio {g} is not a simple fraction")))
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.abs()
}

/// Chooses `q = π_1 / den^(K-1)` so `π_k / q = num^(k-1) den^(K-k)`.
pub fn price_ladder(price_1: f64, g: f64, k_classes: usize) -> Result<PriceLadder> {
    if !(price_1 > 0.0) || !price_1.is_finite() {
        return Err(param(format!("price of the cheapest class must be positive, got {price_1}")));
    }
    if k_classes == 0 {
        return Err(param("need at least one price class"));
    }
    if k_classes > 1 && !(g > 1.0) {
        return Err(param(format!("price ratio must exceed 1, got {g}")));
    }
    let (num, den) = if k_classes == 1 { (1, 1) } else { rationalize(g)? };
    let overflow = || param("price ladder does not fit 64-bit quanta");
    let top = u32::try_from(k_classes - 1).map_err(|_| overflow())?;
    let den_top = den.checked_pow(top).ok_or_else(overflow)?;
    let mut prices = Vec::with_capacity(k_classes);
    for k in 0..k_classes as u32 {
        let p = num
            .checked_pow(k)
            .and_then(|a| den.checked_pow(top - k).and_then(|b| a.checked_mul(b)))
            .ok_or_else(overflow)?;
        prices.push(p);
    }
    Ok(PriceLadder { quantum: price_1 / den_top as f64, prices })
}

/// Result of [`build_goods`], with the value ratio actually achieved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodsBuild {
    pub goods: GoodsSpec,
    pub total_wealth: f64,
    pub total_value: f64,
    /// `Π / C` after rounding the counts.
    pub actual_ratio: f64,
}

/// `M_k = round(ratio · C / (K π_k))`, so every class carries value `≈ Π / K`.
pub fn build_goods(wealth: &WealthVector, ratio: f64, k_classes: usize, price_1: f64, g: f64) -> Result<GoodsBuild> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(param(format!("value ratio Π/C must lie in (0, 1), got {ratio}")));
    }
    let ladder = price_ladder(price_1, g, k_classes)?;
    let total_wealth = wealth.total();
    let mut counts = Vec::with_capacity(k_classes);
    for (k, p) in ladder.prices.iter().enumerate() {
        let price = *p as f64 * ladder.quantum;
        let m = (ratio * total_wealth / (k_classes as f64 * price)).round();
        if m < 1.0 {
            return Err(Error::Configuration(format!("class {} rounds to zero goods", k + 1)));
        }
        counts.push(m as usize);
    }
    let goods = GoodsSpec::new(ladder.prices, counts, ladder.quantum)?;
    let total_value = goods.total_value_money();
    Ok(GoodsBuild { actual_ratio: total_value / total_wealth, goods, total_wealth, total_value })
}

/// Wealth on the integer grid together with the goods on offer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Economy {
    /// Wealth in quanta, floored.
    pub wealth: Vec<i64>,
    /// Wealth in money units before flooring.
    pub wealth_money: Vec<f64>,
    pub goods: GoodsSpec,
}

impl Economy {
    /// Floors `wealth` onto the goods' quantum grid.
    pub fn new(wealth: &WealthVector, goods: GoodsSpec) -> Result<Self> {
        let limit = (1u64 << 62) as f64;
        let mut q = Vec::with_capacity(wealth.len());
        for c in &wealth.values {
            let v = (c / goods.quantum).floor();
            if !(v < limit) {
                return Err(param(format!("wealth {c} overflows the quantum grid")));
            }
            q.push(v as i64);
        }
        Ok(Self { wealth: q, wealth_money: wealth.values.clone(), goods })
    }

    /// Economy given directly in quanta (quantum 1).
    pub fn from_quanta(wealth: Vec<i64>, prices: Vec<i64>, counts: Vec<usize>) -> Result<Self> {
        if wealth.is_empty() || wealth.iter().any(|c| *c < 0) {
            return Err(param("wealth must be non-empty and non-negative"));
        }
        let goods = GoodsSpec::new(prices, counts, 1.0)?;
        let wealth_money = wealth.iter().map(|c| *c as f64).collect();
        Ok(Self { wealth, wealth_money, goods })
    }

    pub fn n_agents(&self) -> usize {
        self.wealth.len()
    }

    pub fn total_wealth(&self) -> i64 {
        self.wealth.iter().sum()
    }

    pub fn total_wealth_money(&self) -> f64 {
        numeric::sum(self.wealth_money.iter().copied())
    }

    /// Strict `Π < C` on the grid.
    pub fn is_solvent(&self) -> bool {
        self.goods.total_value() < self.total_wealth()
    }
}
