//! Wealth profiles: Pareto samples, the mean-adjusted variant, staircase
//! approximations, Gini coefficients and exponent fits from share tables.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::numeric;
use crate::rng::{self, SimRng};

/// Fixed per-agent wealth, in money units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WealthVector {
    pub values: Vec<f64>,
    pub c_min: f64,
    /// Exponent the values were generated with.
    pub beta: f64,
}

impl WealthVector {
    pub fn new(values: Vec<f64>, c_min: f64, beta: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(param("wealth vector must hold at least one agent"));
        }
        if !(c_min > 0.0) || !c_min.is_finite() {
            return Err(param(format!("c_min must be positive, got {c_min}")));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= c_min) || !v.is_finite()) {
            return Err(param(format!("wealth {v} below c_min {c_min}")));
        }
        Ok(Self { values, c_min, beta })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> f64 {
        numeric::sum(self.values.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.total() / self.values.len() as f64
    }

    /// Expected mean `c_min β / (β - 1)` of the generating law, if finite.
    pub fn expected_mean(&self) -> Option<f64> {
        expected_mean(self.beta, self.c_min)
    }
}

pub fn expected_mean(beta: f64, c_min: f64) -> Option<f64> {
    (beta > 1.0).then(|| c_min * beta / (beta - 1.0))
}

/// Inverse CDF of the Pareto law, `u ∈ (0, 1]`.
pub fn pareto_inverse_cdf(u: f64, beta: f64, c_min: f64) -> f64 {
    c_min * u.powf(-1.0 / beta)
}

fn check_pareto(beta: f64, c_min: f64, n: usize) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(param(format!("beta must be positive, got {beta}")));
    }
    if !(c_min > 0.0) || !c_min.is_finite() {
        return Err(param(format!("c_min must be positive, got {c_min}")));
    }
    if n == 0 {
        return Err(param("need at least one agent"));
    }
    Ok(())
}

/// `n` i.i.d. Pareto draws by inverse-CDF sampling.
pub fn sample_pareto(beta: f64, c_min: f64, n: usize, seed: u64) -> Result<WealthVector> {
    sample_pareto_with(beta, c_min, n, &mut rng::seeded(seed))
}

pub fn sample_pareto_with(beta: f64, c_min: f64, n: usize, rng: &mut SimRng) -> Result<WealthVector> {
    check_pareto(beta, c_min, n)?;
    let values = (0..n)
        .map(|_| {
            // random() is on [0, 1); flip it onto (0, 1]
            let u = 1.0 - rng.random::<f64>();
            pareto_inverse_cdf(u, beta, c_min)
        })
        .collect();
    Ok(WealthVector { values, c_min, beta })
}

/// Which branch [`adjust_to_expected_mean`] took.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Adjustment {
    Unchanged,
    Raised { agent: usize },
    /// Agents lowered, wealthiest first.
    Lowered { agents: Vec<usize> },
}

/// Shifts wealth so the empirical mean equals `c_min β / (β - 1)`.
///
/// A deficit is given in full to one uniformly chosen agent. An excess is
/// taken from the wealthiest agent, down to `c_min` at most, then from the
/// next wealthiest and so on.
pub fn adjust_to_expected_mean(w: &WealthVector, rng: &mut SimRng) -> Result<(WealthVector, Adjustment)> {
    let target = w.expected_mean().ok_or_else(|| {
        Error::Unsupported(format!("expected mean diverges for beta = {}", w.beta))
    })?;
    let n = w.len() as f64;
    let target_total = target * n;
    let total = w.total();
    let mut out = w.clone();
    if total == target_total {
        return Ok((out, Adjustment::Unchanged));
    }
    if total < target_total {
        let agent = rng.random_range(0..w.len());
        // recompute against the other agents so rounding does not accumulate
        let others = numeric::sum(w.values.iter().enumerate().filter(|(i, _)| *i != agent).map(|(_, v)| *v));
        out.values[agent] = target_total - others;
        return Ok((out, Adjustment::Raised { agent }));
    }
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|a, b| w.values[*b].total_cmp(&w.values[*a]).then(a.cmp(b)));
    let mut excess = total - target_total;
    let mut lowered = Vec::new();
    for &i in &order {
        if excess <= 0.0 {
            break;
        }
        let room = out.values[i] - w.c_min;
        if room <= 0.0 {
            continue;
        }
        lowered.push(i);
        if room >= excess {
            let others = numeric::sum(out.values.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v));
            out.values[i] = (target_total - others).max(w.c_min);
            excess = 0.0;
        } else {
            out.values[i] = w.c_min;
            excess -= room;
        }
    }
    Ok((out, Adjustment::Lowered { agents: lowered }))
}

/// Piecewise-constant approximation of a Pareto law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaircaseSpec {
    /// `c_g = c_min b^g`, strictly increasing.
    pub levels: Vec<f64>,
    pub counts: Vec<usize>,
    pub base: f64,
    pub n_levels: usize,
    pub beta: f64,
    pub c_min: f64,
}

impl StaircaseSpec {
    pub fn n_total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Exact mean wealth of the staircase.
    pub fn mean(&self) -> f64 {
        let total = numeric::sum(self.levels.iter().zip(&self.counts).map(|(c, n)| c * *n as f64));
        total / self.n_total() as f64
    }

    /// One value per agent, levels in increasing order.
    pub fn to_wealth(&self) -> WealthVector {
        let values = self
            .levels
            .iter()
            .zip(&self.counts)
            .flat_map(|(c, n)| std::iter::repeat_n(*c, *n))
            .collect();
        WealthVector { values, c_min: self.c_min, beta: self.beta }
    }
}

/// Probability mass assigned to each staircase level.
pub fn staircase_masses(beta: f64, base: f64, n_levels: usize) -> Vec<f64> {
    (0..n_levels)
        .map(|g| {
            let lo = base.powf(-beta * g as f64);
            if g + 1 == n_levels {
                lo
            } else {
                lo - base.powf(-beta * (g + 1) as f64)
            }
        })
        .collect()
}

pub fn build_staircase(beta: f64, c_min: f64, base: f64, n_levels: usize, n_total: usize) -> Result<StaircaseSpec> {
    check_pareto(beta, c_min, n_total)?;
    if !(base > 1.0) || !base.is_finite() {
        return Err(param(format!("staircase base must exceed 1, got {base}")));
    }
    if n_levels == 0 {
        return Err(param("staircase needs at least one level"));
    }
    let levels: Vec<f64> = (0..n_levels).map(|g| c_min * base.powi(g as i32)).collect();
    let masses = staircase_masses(beta, base, n_levels);
    let mut counts: Vec<usize> = masses.iter().map(|m| (m * n_total as f64).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    counts[0] += n_total - assigned;
    Ok(StaircaseSpec { levels, counts, base, n_levels, beta, c_min })
}

/// Population Gini coefficient `Σ|x_i - x_j| / (2 n² x̄)`.
pub fn gini(values: &[f64]) -> Result<f64> {
    if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(param("gini needs finite non-negative values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total = numeric::sum(sorted.iter().copied());
    if !(total > 0.0) {
        return Err(Error::Degenerate("gini of an all-zero vector is undefined".into()));
    }
    let n = sorted.len() as f64;
    // sorted form: Σ_i (2i - n - 1) x_(i), i = 1..n
    let weighted = numeric::sum(sorted.iter().enumerate().map(|(i, x)| (2.0 * (i as f64 + 1.0) - n - 1.0) * x));
    Ok((weighted / (n * total)).clamp(0.0, 1.0))
}

/// Wealth shares of the top population fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareTable {
    pub rows: Vec<ShareRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShareRow {
    pub p_top: f64,
    pub w_share: f64,
}

impl ShareTable {
    pub fn new(rows: Vec<ShareRow>) -> Result<Self> {
        for r in &rows {
            if !(r.p_top > 0.0 && r.p_top <= 1.0) || !(r.w_share > 0.0 && r.w_share <= 1.0) {
                return Err(param(format!("share row out of (0, 1]: {r:?}")));
            }
        }
        for pair in rows.windows(2) {
            if pair[1].p_top == pair[0].p_top {
                return Err(Error::Degenerate(format!("repeated population fraction {}", pair[0].p_top)));
            }
            if pair[1].p_top > pair[0].p_top {
                return Err(param("population fractions must be strictly decreasing"));
            }
        }
        Ok(Self { rows })
    }

    /// Reads a CSV with header `p_top,w_share`.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        Self::from_reader(&mut reader)
    }

    pub fn from_reader<R: std::io::Read>(reader: &mut csv::Reader<R>) -> Result<Self> {
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["p_top", "w_share"] {
            return Err(param(format!("expected header p_top,w_share, got {headers:?}")));
        }
        let rows = reader.deserialize().collect::<std::result::Result<Vec<ShareRow>, _>>()?;
        Self::new(rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoFit {
    pub beta: f64,
    /// Three standard deviations of `beta`; `None` with only two rows.
    pub error: Option<f64>,
    pub slope: f64,
}

/// Least-squares slope of `log w` against `log P`, inverted through
/// `w ∝ P^(1 - 1/β)`.
pub fn fit_pareto_exponent(shares: &ShareTable) -> Result<ParetoFit> {
    if shares.rows.len() < 2 {
        return Err(param("fit needs at least two rows"));
    }
    let x: Vec<f64> = shares.rows.iter().map(|r| r.p_top.ln()).collect();
    let y: Vec<f64> = shares.rows.iter().map(|r| r.w_share.ln()).collect();
    let fit = numeric::fit_line(&x, &y)
        .ok_or_else(|| Error::Degenerate("population fractions have zero spread".into()))?;
    let s = fit.slope;
    if s >= 1.0 {
        return Err(Error::FitDomain(format!("slope {s} implies no positive exponent")));
    }
    let beta = 1.0 / (1.0 - s);
    // dβ/ds = 1 / (1 - s)^2
    let error = fit.slope_se.map(|se| 3.0 * se / ((1.0 - s) * (1.0 - s)));
    Ok(ParetoFit { beta, error, slope: s })
}

/// Synthetic, noise-free share table `w = P^(1 - 1/β)`.
pub fn synthetic_shares(beta: f64, p_top: &[f64]) -> Result<ShareTable> {
    let exponent = 1.0 - 1.0 / beta;
    ShareTable::new(p_top.iter().map(|p| ShareRow { p_top: *p, w_share: p.powf(exponent) }).collect())
}
