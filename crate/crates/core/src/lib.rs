//! Random-exchange economy with Pareto-distributed wealth.
//!
//! Agents hold a fixed wealth, trade indivisible goods at fixed prices and
//! may only buy when their cash covers the price. The crate provides
//!
//! - [`wealth`]: Pareto, adjusted-Pareto and staircase wealth profiles, Gini
//!   coefficients and exponent fits from wealth-share tables;
//! - [`market`]: goods, allocation state, the symmetric trade rules and exact
//!   enumeration oracles for tiny economies;
//! - [`simulate`]: the Monte Carlo driver, stationarity detection, liquidity
//!   observables and parameter sweeps;
//! - [`analytic`]: truncated-Poisson marginals, self-consistent success rates
//!   and large-λ closed forms.

pub mod analytic;
pub mod error;
pub mod market;
pub mod numeric;
pub mod rng;
pub mod simulate;
pub mod wealth;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
