//! Constrained sums of product-Poisson weights over `{z : Σ z_k π_k ≤ c}`.
//!
//! Classes `2..K` are enumerated depth first; class 1 is summed in closed
//! range form at each leaf.

use super::poisson::{log_range, log_term};
use crate::error::{Error, Result};
use crate::numeric::LogSum;

pub const DEFAULT_LATTICE_CAP: usize = 5_000_000;

/// Log masses for one wealth level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSums {
    /// `ln Z(c)`.
    pub log_z: f64,
    /// `ln` of the mass where class `k` is saturated.
    pub log_saturated: Vec<f64>,
    /// `ln` of the mass where class `k` can still be bought.
    pub log_open: Vec<f64>,
    /// `ln Σ z_k w(z)`.
    pub log_first_moment: Vec<f64>,
    pub leaves: usize,
}

impl LevelSums {
    pub fn saturation(&self, k: usize) -> f64 {
        (self.log_saturated[k] - self.log_z).exp()
    }

    pub fn open(&self, k: usize) -> f64 {
        (self.log_open[k] - self.log_z).exp()
    }

    pub fn mean(&self, k: usize) -> f64 {
        (self.log_first_moment[k] - self.log_z).exp()
    }
}

struct Walk<'a> {
    prices: &'a [i64],
    lambda: &'a [f64],
    ln_lambda: Vec<f64>,
    z: Vec<u64>,
    log_z: LogSum,
    sat: Vec<LogSum>,
    open: Vec<LogSum>,
    moment: Vec<LogSum>,
    leaves: usize,
    cap: usize,
}

pub(crate) fn level_sums(wealth: i64, prices: &[i64], lambda: &[f64], cap: usize) -> Result<LevelSums> {
    let k = prices.len();
    let mut walk = Walk {
        prices,
        lambda,
        ln_lambda: lambda.iter().map(|l| l.ln()).collect(),
        z: vec![0; k],
        log_z: LogSum::default(),
        sat: vec![LogSum::default(); k],
        open: vec![LogSum::default(); k],
        moment: vec![LogSum::default(); k],
        leaves: 0,
        cap,
    };
    walk.descend(k - 1, wealth.max(0), 0.0)?;
    Ok(LevelSums {
        log_z: walk.log_z.value(),
        log_saturated: walk.sat.iter().map(LogSum::value).collect(),
        log_open: walk.open.iter().map(LogSum::value).collect(),
        log_first_moment: walk.moment.iter().map(LogSum::value).collect(),
        leaves: walk.leaves,
    })
}

impl Walk<'_> {
    fn descend(&mut self, class: usize, residual: i64, lw: f64) -> Result<()> {
        if class == 0 {
            return self.leaf(residual, lw);
        }
        let price = self.prices[class];
        let top = (residual / price) as u64;
        for zk in 0..=top {
            self.z[class] = zk;
            let w = lw + log_term(self.ln_lambda[class], zk);
            self.descend(class - 1, residual - zk as i64 * price, w)?;
        }
        self.z[class] = 0;
        Ok(())
    }

    fn leaf(&mut self, residual: i64, lw: f64) -> Result<()> {
        self.leaves += 1;
        if self.leaves > self.cap {
            return Err(Error::LatticeCap(format!("more than {} lattice points for one wealth level", self.cap)));
        }
        let p1 = self.prices[0];
        let m1 = (residual / p1) as u64;
        let inner = log_range(self.lambda[0], 0, m1);
        let total = lw + inner;
        self.log_z.add(total);
        self.sat[0].add(lw + log_term(self.ln_lambda[0], m1));
        if m1 > 0 {
            let below = lw + log_range(self.lambda[0], 0, m1 - 1);
            self.open[0].add(below);
            self.moment[0].add(below + self.ln_lambda[0]);
        }
        for k in 1..self.prices.len() {
            let pk = self.prices[k];
            let from = if residual < pk { 0 } else { ((residual - pk) / p1) as u64 + 1 };
            self.sat[k].add(lw + log_range(self.lambda[0], from, m1));
            if from > 0 {
                self.open[k].add(lw + log_range(self.lambda[0], 0, from.min(m1 + 1) - 1));
            }
            if self.z[k] > 0 {
                self.moment[k].add(total + (self.z[k] as f64).ln());
            }
        }
        Ok(())
    }
}
