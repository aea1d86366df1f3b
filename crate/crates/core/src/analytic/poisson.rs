//! Truncated Poisson weights `λ^z / z!` in log space.

use crate::error::{param, Result};

/// Relative size below which further terms are dropped.
const NEGLIGIBLE: f64 = 1e-18;

pub(crate) fn log_term(ln_lambda: f64, z: u64) -> f64 {
    let zf = z as f64;
    if z == 0 {
        0.0
    } else {
        zf * ln_lambda - libm::lgamma(zf + 1.0)
    }
}

/// `ln Σ_{z=a}^{b} λ^z / z!`, summed outward from the largest term.
pub(crate) fn log_range(lambda: f64, a: u64, b: u64) -> f64 {
    if a > b {
        return f64::NEG_INFINITY;
    }
    let ln_lambda = lambda.ln();
    let peak = if lambda.is_finite() && lambda < b as f64 { (lambda.floor() as u64).clamp(a, b) } else { b };
    let mut total = 1.0;
    let mut rel = 1.0;
    let mut z = peak;
    while z > a {
        rel *= z as f64 / lambda;
        total += rel;
        z -= 1;
        if rel < NEGLIGIBLE * total {
            break;
        }
    }
    rel = 1.0;
    z = peak;
    while z < b {
        z += 1;
        rel *= lambda / z as f64;
        total += rel;
        if rel < NEGLIGIBLE * total {
            break;
        }
    }
    log_term(ln_lambda, peak) + total.ln()
}

/// `P(z)` for `z = 0..=m` with `P(z) ∝ λ^z / z!`.
pub fn truncated_poisson_marginal(lambda: f64, m: u64) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    let log_z = log_range(lambda, 0, m);
    let peak = (lambda.floor() as u64).min(m);
    let mut out = vec![0.0; m as usize + 1];
    let top = (log_term(lambda.ln(), peak) - log_z).exp();
    out[peak as usize] = top;
    let mut v = top;
    for z in (1..=peak).rev() {
        v *= z as f64 / lambda;
        out[z as usize - 1] = v;
    }
    v = top;
    for z in peak + 1..=m {
        v *= lambda / z as f64;
        out[z as usize] = v;
    }
    Ok(out)
}

/// Most likely holding: `min(m, ⌊λ⌋)`.
pub fn mode_z(lambda: f64, m: u64) -> Result<u64> {
    check_lambda(lambda)?;
    Ok(if lambda >= m as f64 { m } else { lambda.floor() as u64 })
}

/// Mass at the cap, `P(z = m)`.
pub fn cap_probability(lambda: f64, m: u64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok((log_term(lambda.ln(), m) - log_range(lambda, 0, m)).exp())
}

/// Mean of the truncated law, `λ (1 − P(m))`.
pub fn truncated_poisson_mean(lambda: f64, m: u64) -> Result<f64> {
    Ok(lambda * (1.0 - cap_probability(lambda, m)?))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(param(format!("lambda must be positive and finite, got {lambda}")))
    }
}
