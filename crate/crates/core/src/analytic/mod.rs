//! Mean-field stationary solutions.
//!
//! Each agent's holdings follow a product of Poisson laws with parameters
//! `λ_k = M_k / (N p_k)`, truncated to the budget. The rates `p_k` are fixed
//! by requiring that a random buyer is unsaturated with probability `p_k`.

mod lattice;
mod poisson;
mod solver;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

pub use lattice::{LevelSums, DEFAULT_LATTICE_CAP};
pub use poisson::{cap_probability, mode_z, truncated_poisson_marginal, truncated_poisson_mean};
pub use solver::{
    mean_holdings, solve_multi_class_fixed_point, solve_single_class, target_rates, threshold_probability,
    MeanFieldProblem, SelfConsistentSolution, SolverMethod, StepHalvingOptions,
};

/// `c⁽¹⁾ = [β(1 − Π/C)]^{1/(1−β)}` and `p = (Π/C)⟨c⟩/c⁽¹⁾`, with `c_min = 1`.
pub fn closed_form_c1_ps(beta: f64, pi_over_c: f64) -> Result<(f64, f64)> {
    if !(beta > 1.0) {
        return Err(Error::Unsupported(format!("closed forms need beta > 1, got {beta}")));
    }
    if !(pi_over_c > 0.0 && pi_over_c < 1.0) {
        return Err(param(format!("Π/C must lie in (0, 1), got {pi_over_c}")));
    }
    let c1 = (beta * (1.0 - pi_over_c)).powf(1.0 / (1.0 - beta));
    Ok((c1, pi_over_c * mean_wealth(beta) / c1))
}

fn mean_wealth(beta: f64) -> f64 {
    beta / (beta - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassThresholds {
    /// `c⁽ᵏ⁾` from the explicit formula.
    pub thresholds: Vec<f64>,
    /// `c⁽ᵏ⁾` from the one-step recurrence.
    pub recurrence: Vec<f64>,
    pub mean_wealth: f64,
    pub p_suc: Vec<f64>,
}

/// Thresholds for `K` classes with equal class values `Π/K`.
pub fn recurrence_ck(beta: f64, pi_over_kc: f64, k_classes: usize) -> Result<ClassThresholds> {
    if !(beta > 1.0) {
        return Err(Error::Unsupported(format!("closed forms need beta > 1, got {beta}")));
    }
    if !(pi_over_kc > 0.0) || k_classes == 0 {
        return Err(param("need Π/(KC) > 0 and K ≥ 1"));
    }
    let expo = 1.0 / (1.0 - beta);
    let mut thresholds = Vec::with_capacity(k_classes);
    let mut recurrence = Vec::with_capacity(k_classes);
    let mut prev: f64 = 1.0;
    for k in 1..=k_classes {
        let bk = beta.powi(k as i32);
        let bracket = bk - (beta - bk * beta) / (1.0 - beta) * pi_over_kc;
        let step = beta * prev.powf(1.0 - beta) - beta * pi_over_kc;
        if !(bracket > 0.0) || !(step > 0.0) {
            return Err(Error::RegimeViolation(format!(
                "threshold bracket non-positive at k = {k} (beta {beta}, Π/(KC) {pi_over_kc})"
            )));
        }
        let explicit = bracket.powf(expo);
        let iterated = step.powf(expo);
        if (explicit - iterated).abs() > 1e-9 * explicit {
            return Err(Error::Mismatch(format!("c({k}): {explicit} vs recurrence {iterated}")));
        }
        thresholds.push(explicit);
        recurrence.push(iterated);
        prev = iterated;
    }
    let mean = mean_wealth(beta);
    let p_suc = thresholds.iter().map(|c| pi_over_kc * mean / c).collect();
    Ok(ClassThresholds { thresholds, recurrence, mean_wealth: mean, p_suc })
}
